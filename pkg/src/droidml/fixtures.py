"""Synthetic artifact builders.

Everything the parsers consume can be fabricated here from declarative
specs: dex containers, binary manifests, whole APK zips, strace text, pcap
captures, API logs, and call graphs. Each builder also knows the exact
records the extractor should recover, so generated corpora ship with
ground truth that was computed from the declarations, never by running the
parsers themselves.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import struct
import zipfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dalvik import METHOD_INVOKE_OPS, OPCODE_TABLE
from .errors import SpecError
from .records import FeatureKind, FeatureRecord, MethodRef

# ---------------------------------------------------------------------------
# dex assembly


@dataclass(frozen=True)
class MethodSpec:
    """One defined method: its identity, call sites, and trailing opcodes."""

    class_name: str
    method_name: str = "run"
    descriptor: str = "()V"
    invokes: tuple[MethodRef, ...] = ()
    extra_opcodes: tuple[str, ...] = ()

    def mnemonics(self) -> list[str]:
        out: list[str] = []
        for _ in self.invokes:
            out.extend(("const/4", "invoke-virtual"))
        out.extend(self.extra_opcodes)
        out.append("return-void")
        return out


_MNEMONIC_TO_INFO = {info.mnemonic: info for info in OPCODE_TABLE.values()}


def _uleb128(value: int) -> bytes:
    out = bytearray()
    while True:
        b = value & 0x7F
        value >>= 7
        if value:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def _mutf8(text: str) -> tuple[bytes, int]:
    """Modified UTF-8 bytes plus the UTF-16 code-unit count."""
    units = struct.unpack(f"<{len(text.encode('utf-16-le')) // 2}H", text.encode("utf-16-le"))
    out = bytearray()
    for u in units:
        if u == 0:
            out += b"\xc0\x80"
        elif u < 0x80:
            out.append(u)
        elif u < 0x800:
            out += bytes((0xC0 | (u >> 6), 0x80 | (u & 0x3F)))
        else:
            out += bytes((0xE0 | (u >> 12), 0x80 | ((u >> 6) & 0x3F), 0x80 | (u & 0x3F)))
    return bytes(out), len(units)


def _dotted_to_descriptor(class_name: str) -> str:
    return "L" + class_name.replace(".", "/") + ";"


def _split_params(descriptor: str) -> tuple[list[str], str]:
    if not descriptor.startswith("("):
        raise SpecError(f"bad method descriptor {descriptor!r}")
    params: list[str] = []
    i = 1
    while descriptor[i] != ")":
        start = i
        while descriptor[i] == "[":
            i += 1
        if descriptor[i] == "L":
            i = descriptor.index(";", i) + 1
        else:
            i += 1
        params.append(descriptor[start:i])
    return params, descriptor[i + 1 :]


def _shorty(params: list[str], ret: str) -> str:
    def ch(desc: str) -> str:
        return "L" if desc[0] in "L[" else desc[0]

    return ch(ret) + "".join(ch(p) for p in params)


def build_dex(
    methods: tuple[MethodSpec, ...] | list[MethodSpec],
    extra_strings: tuple[str, ...] = (),
    version: bytes = b"035",
) -> bytes:
    """Assemble a minimal valid dex defining the given methods.

    Strings land in the pool sorted by code point; method ids are sorted
    by (class, name, proto) as the format requires, and the checksum and
    signature header fields are filled in for real.
    """
    methods = tuple(methods)
    seen = set()
    for m in methods:
        key = (m.class_name, m.method_name, m.descriptor)
        if key in seen:
            raise SpecError(f"duplicate method {key}")
        seen.add(key)

    # identity tables, gathered before any layout happens
    all_refs = [MethodRef(m.class_name, m.method_name, m.descriptor) for m in methods]
    for m in methods:
        all_refs.extend(m.invokes)

    protos: dict[str, tuple[list[str], str]] = {}
    type_descs: set[str] = set()
    strings: set[str] = set(extra_strings)
    for ref in all_refs:
        params, ret = _split_params(ref.descriptor)
        protos.setdefault(ref.descriptor, (params, ret))
        type_descs.add(_dotted_to_descriptor(ref.class_name))
        type_descs.update(params)
        type_descs.add(ret)
        strings.add(ref.method_name)
        strings.add(_shorty(params, ret))
    strings.update(type_descs)

    string_list = sorted(strings)
    string_idx = {s: i for i, s in enumerate(string_list)}
    type_list = sorted(type_descs, key=lambda d: string_idx[d])
    type_idx = {d: i for i, d in enumerate(type_list)}
    proto_keys = sorted(
        protos,
        key=lambda d: (
            string_idx[_shorty(*protos[d])],
            type_idx[protos[d][1]],
            tuple(type_idx[p] for p in protos[d][0]),
        ),
    )
    proto_idx = {d: i for i, d in enumerate(proto_keys)}

    def method_key(ref: MethodRef) -> tuple[int, int, int]:
        return (
            type_idx[_dotted_to_descriptor(ref.class_name)],
            string_idx[ref.method_name],
            proto_idx[ref.descriptor],
        )

    method_ids = sorted({method_key(ref) for ref in all_refs})
    method_idx = {key: i for i, key in enumerate(method_ids)}

    defined_classes: list[str] = []
    for m in methods:
        if m.class_name not in defined_classes:
            defined_classes.append(m.class_name)

    n_s, n_t, n_p, n_m, n_c = (
        len(string_list),
        len(type_list),
        len(proto_keys),
        len(method_ids),
        len(defined_classes),
    )
    string_ids_off = 0x70
    type_ids_off = string_ids_off + 4 * n_s
    proto_ids_off = type_ids_off + 4 * n_t
    method_ids_off = proto_ids_off + 12 * n_p
    class_defs_off = method_ids_off + 8 * n_m
    data_off = class_defs_off + 32 * n_c

    data = bytearray()

    def align4() -> None:
        while (data_off + len(data)) % 4:
            data.append(0)

    # parameter type lists
    param_list_off: dict[tuple[str, ...], int] = {}
    for desc in proto_keys:
        params = tuple(protos[desc][0])
        if not params or params in param_list_off:
            continue
        align4()
        param_list_off[params] = data_off + len(data)
        data += struct.pack("<I", len(params))
        for p in params:
            data += struct.pack("<H", type_idx[p])

    # code items
    def assemble(spec: MethodSpec) -> bytes:
        units: list[int] = []
        for target in spec.invokes:
            units.append(0x0012)  # const/4 v0, #0
            units.append(0x6E | (1 << 12))  # invoke-virtual {v0}
            units.append(method_idx[method_key(target)])
            units.append(0x0000)
        for mnemonic in spec.extra_opcodes:
            info = _MNEMONIC_TO_INFO.get(mnemonic)
            if info is None or info.code in METHOD_INVOKE_OPS:
                raise SpecError(f"cannot assemble opcode {mnemonic!r}")
            units.append(info.code)
            units.extend([0] * (info.units - 1))
        units.append(0x000E)  # return-void
        return struct.pack(f"<{len(units)}H", *units)

    code_off: dict[int, int] = {}
    for i, spec in enumerate(methods):
        align4()
        code_off[i] = data_off + len(data)
        insns = assemble(spec)
        outs = 1 if spec.invokes else 0
        data += struct.pack("<HHHHII", 2, 1, outs, 0, 0, len(insns) // 2)
        data += insns

    # string data
    string_data_off: dict[int, int] = {}
    for i, s in enumerate(string_list):
        string_data_off[i] = data_off + len(data)
        encoded, utf16_len = _mutf8(s)
        data += _uleb128(utf16_len) + encoded + b"\x00"

    # class data
    class_data_off: dict[str, int] = {}
    for cls in defined_classes:
        class_data_off[cls] = data_off + len(data)
        members = sorted(
            (method_idx[method_key(MethodRef(m.class_name, m.method_name, m.descriptor))], i)
            for i, m in enumerate(methods)
            if m.class_name == cls
        )
        data += _uleb128(0) + _uleb128(0) + _uleb128(len(members)) + _uleb128(0)
        prev = 0
        for idx, spec_i in members:
            data += _uleb128(idx - prev) + _uleb128(0x1) + _uleb128(code_off[spec_i])
            prev = idx

    total = data_off + len(data)
    buf = bytearray(total)
    buf[0:4] = b"dex\n"
    buf[4:7] = version
    buf[7] = 0
    struct.pack_into("<I", buf, 0x20, total)
    struct.pack_into("<I", buf, 0x24, 0x70)
    struct.pack_into("<I", buf, 0x28, 0x12345678)
    struct.pack_into("<II", buf, 0x38, n_s, string_ids_off)
    struct.pack_into("<II", buf, 0x40, n_t, type_ids_off)
    struct.pack_into("<II", buf, 0x48, n_p, proto_ids_off if n_p else 0)
    struct.pack_into("<II", buf, 0x50, 0, 0)
    struct.pack_into("<II", buf, 0x58, n_m, method_ids_off if n_m else 0)
    struct.pack_into("<II", buf, 0x60, n_c, class_defs_off if n_c else 0)
    struct.pack_into("<II", buf, 0x68, len(data), data_off)

    for i in range(n_s):
        struct.pack_into("<I", buf, string_ids_off + 4 * i, string_data_off[i])
    for i, desc in enumerate(type_list):
        struct.pack_into("<I", buf, type_ids_off + 4 * i, string_idx[desc])
    for i, desc in enumerate(proto_keys):
        params, ret = protos[desc]
        struct.pack_into(
            "<III",
            buf,
            proto_ids_off + 12 * i,
            string_idx[_shorty(params, ret)],
            type_idx[ret],
            param_list_off.get(tuple(params), 0),
        )
    for key, i in method_idx.items():
        cls_i, name_i, proto_i = key
        struct.pack_into("<HHI", buf, method_ids_off + 8 * i, cls_i, proto_i, name_i)
    for i, cls in enumerate(defined_classes):
        off = class_defs_off + 32 * i
        struct.pack_into("<I", buf, off, type_idx[_dotted_to_descriptor(cls)])
        struct.pack_into("<I", buf, off + 4, 0x1)  # access_flags
        struct.pack_into("<I", buf, off + 8, 0xFFFFFFFF)  # no superclass
        struct.pack_into("<I", buf, off + 16, 0xFFFFFFFF)  # no source file
        struct.pack_into("<I", buf, off + 24, class_data_off[cls])

    buf[data_off : data_off + len(data)] = data
    buf[12:32] = hashlib.sha1(buf[32:]).digest()
    struct.pack_into("<I", buf, 8, zlib.adler32(bytes(buf[12:])) & 0xFFFFFFFF)
    return bytes(buf)


# ---------------------------------------------------------------------------
# binary manifest assembly


@dataclass(frozen=True)
class ComponentSpec:
    tag: str
    name: str
    intents: tuple[str, ...] = ()


@dataclass(frozen=True)
class ManifestSpec:
    package: str = "com.example.app"
    permissions: tuple[str, ...] = ()
    features: tuple[str, ...] = ()
    components: tuple[ComponentSpec, ...] = ()


_ANDROID_NS = "http://schemas.android.com/apk/res/android"


class _AxmlWriter:
    def __init__(self, utf8_pool: bool = False) -> None:
        self.strings: list[str] = []
        self.index: dict[str, int] = {}
        self.chunks: list[bytes] = []
        self.utf8_pool = utf8_pool

    def idx(self, s: str) -> int:
        if s not in self.index:
            self.index[s] = len(self.strings)
            self.strings.append(s)
        return self.index[s]

    def start(self, tag: str, attrs: dict[str, str] | None = None) -> None:
        attrs = attrs or {}
        items = [(self.idx(k), self.idx(v)) for k, v in attrs.items()]
        name_i = self.idx(tag)
        size = 36 + 20 * len(items)
        chunk = struct.pack(
            "<HHIIIIIHHHHHH",
            0x0102, 16, size, 1, 0xFFFFFFFF, 0xFFFFFFFF, name_i,
            20, 20, len(items), 0, 0, 0,
        )
        for k_i, v_i in items:
            chunk += struct.pack("<IIIHBBI", 0xFFFFFFFF, k_i, v_i, 8, 0, 0x03, v_i)
        self.chunks.append(chunk)

    def end(self, tag: str) -> None:
        self.chunks.append(
            struct.pack("<HHIIIII", 0x0103, 16, 24, 1, 0xFFFFFFFF, 0xFFFFFFFF, self.idx(tag))
        )

    def namespace(self, start: bool) -> None:
        ctype = 0x0100 if start else 0x0101
        self.chunks.append(
            struct.pack(
                "<HHIIIII", ctype, 16, 24, 1, 0xFFFFFFFF,
                self.idx("android"), self.idx(_ANDROID_NS),
            )
        )

    def resource_map(self, ids: tuple[int, ...] = (0x01010003,)) -> None:
        self.chunks.append(
            struct.pack("<HHI", 0x0180, 8, 8 + 4 * len(ids))
            + b"".join(struct.pack("<I", v) for v in ids)
        )

    def _pool(self) -> bytes:
        offsets: list[int] = []
        blob = bytearray()
        for s in self.strings:
            offsets.append(len(blob))
            if self.utf8_pool:
                encoded = s.encode("utf-8")
                if len(encoded) > 0x7F or len(s) > 0x7F:
                    raise SpecError("utf8 pool strings must stay short")
                blob += bytes((len(s), len(encoded))) + encoded + b"\x00"
            else:
                units = s.encode("utf-16-le")
                blob += struct.pack("<H", len(units) // 2) + units + b"\x00\x00"
        while len(blob) % 4:
            blob.append(0)
        header_size = 28
        strings_start = header_size + 4 * len(self.strings)
        size = strings_start + len(blob)
        flags = (1 << 8) if self.utf8_pool else 0
        out = struct.pack(
            "<HHIIIIII", 0x0001, header_size, size,
            len(self.strings), 0, flags, strings_start, 0,
        )
        out += b"".join(struct.pack("<I", o) for o in offsets)
        return out + blob

    def tobytes(self) -> bytes:
        body = self._pool() + b"".join(self.chunks)
        return struct.pack("<HHI", 0x0003, 8, 8 + len(body)) + body


def build_manifest(spec: ManifestSpec, utf8_pool: bool = False) -> bytes:
    w = _AxmlWriter(utf8_pool=utf8_pool)
    # interned up front so pool order is stable whatever the spec contents
    w.idx("manifest")
    w.resource_map()
    w.namespace(True)
    w.start("manifest", {"package": spec.package})
    for perm in spec.permissions:
        w.start("uses-permission", {"name": perm})
        w.end("uses-permission")
    for feat in spec.features:
        w.start("uses-feature", {"name": feat})
        w.end("uses-feature")
    w.start("application")
    for comp in spec.components:
        w.start(comp.tag, {"name": comp.name})
        if comp.intents:
            w.start("intent-filter")
            for intent in comp.intents:
                w.start("action", {"name": intent})
                w.end("action")
            w.end("intent-filter")
        w.end(comp.tag)
    w.end("application")
    w.end("manifest")
    w.namespace(False)
    return w.tobytes()


# ---------------------------------------------------------------------------
# apk container


def build_zip(entries: list[tuple[str, bytes]]) -> bytes:
    """Stored zip with a frozen timestamp, so equal inputs give equal bytes."""
    out = io.BytesIO()
    with zipfile.ZipFile(out, "w", zipfile.ZIP_STORED) as zf:
        for name, payload in entries:
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, payload)
    return out.getvalue()


@dataclass(frozen=True)
class ApkSpec:
    manifest: ManifestSpec = field(default_factory=ManifestSpec)
    methods: tuple[MethodSpec, ...] = ()
    addresses: tuple[str, ...] = ()
    noise_strings: tuple[str, ...] = ()
    extra_entries: tuple[tuple[str, bytes], ...] = ()
    utf8_pool: bool = False


def build_apk(spec: ApkSpec) -> bytes:
    entries = [
        ("AndroidManifest.xml", build_manifest(spec.manifest, spec.utf8_pool)),
        ("classes.dex", build_dex(spec.methods, spec.addresses + spec.noise_strings)),
    ]
    entries.extend(spec.extra_entries)
    return build_zip(entries)


def _matches(pattern: str, canonical: str) -> bool:
    if pattern.endswith("."):
        return canonical.startswith(pattern)
    if "(" in pattern:
        return canonical == pattern
    return canonical.split("(")[0] == pattern


def expected_static_records(
    spec: ApkSpec,
    platform_prefixes: tuple[str, ...],
    restricted: list[str],
    suspicious: list[str],
    api_perm_map: list[tuple[str, str]],
) -> tuple[set[FeatureRecord], dict[FeatureRecord, int]]:
    """What extraction must recover for an APK built from this spec.

    Derived from the declarations alone; shares no code with the parsers
    beyond the record types.
    """
    records: set[FeatureRecord] = set()
    counts: dict[FeatureRecord, int] = {}
    for perm in spec.manifest.permissions:
        records.add(FeatureRecord(FeatureKind.REQUESTED_PERMISSION, perm))
    for feat in spec.manifest.features:
        records.add(FeatureRecord(FeatureKind.HARDWARE_COMPONENT, feat))
    for comp in spec.manifest.components:
        records.add(FeatureRecord(FeatureKind.APP_COMPONENT, comp.name))
        for intent in comp.intents:
            records.add(FeatureRecord(FeatureKind.FILTERED_INTENT, intent))

    calls: dict[str, int] = {}
    for method in spec.methods:
        for ref in method.invokes:
            if ref.class_name.startswith(platform_prefixes):
                calls[ref.canonical()] = calls.get(ref.canonical(), 0) + 1
    for canonical, n in calls.items():
        rec = FeatureRecord(FeatureKind.API_CALL, canonical)
        records.add(rec)
        counts[rec] = n
    for addr in spec.addresses:
        records.add(FeatureRecord(FeatureKind.NETWORK_ADDRESS, addr))

    for patterns, kind in (
        (restricted, FeatureKind.RESTRICTED_API_CALL),
        (suspicious, FeatureKind.SUSPICIOUS_API_CALL),
    ):
        for pattern in patterns:
            if any(_matches(pattern, c) for c in calls):
                records.add(FeatureRecord(kind, pattern))
    for pattern, permission in api_perm_map:
        if permission in spec.manifest.permissions and any(_matches(pattern, c) for c in calls):
            records.add(FeatureRecord(FeatureKind.USED_PERMISSION, permission))
    return records, counts


def expected_method_mnemonics(spec: ApkSpec) -> list[list[str]]:
    """Per-method opcode mnemonics in dex emission order: classes by first
    appearance, methods within a class by name."""
    by_class: dict[str, list[MethodSpec]] = {}
    for m in spec.methods:
        by_class.setdefault(m.class_name, []).append(m)
    out: list[list[str]] = []
    for cls in by_class:
        for m in sorted(by_class[cls], key=lambda m: (m.method_name, m.descriptor)):
            out.append(m.mnemonics())
    return out


# ---------------------------------------------------------------------------
# strace text


def strace_call_line(pid: int, name: str, args: str = "", ret: str = "0") -> str:
    return f"{pid}  {name}({args}) = {ret}"


def strace_unfinished_lines(
    pid: int, name: str, args: str = "", ret: str = "0"
) -> tuple[str, str]:
    return (
        f"{pid}  {name}({args} <unfinished ...>",
        f"{pid}  <... {name} resumed> ) = {ret}",
    )


def write_strace(lines: list[str]) -> str:
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# pcap captures


@dataclass(frozen=True)
class PacketSpec:
    ts: float
    src: str
    sport: int
    dst: str
    dport: int
    flags: int = 0x18
    seq: int = 0
    payload: bytes = b""
    pad_to: int | None = None
    vlan: bool = False


def _ip_bytes(ip: str) -> bytes:
    return bytes(int(o) for o in ip.split("."))


def build_frame(p: PacketSpec, linktype: int = 1) -> bytes:
    if linktype == 1:
        if p.vlan:
            link = b"\x02" * 6 + b"\x04" * 6 + struct.pack(">HHH", 0x8100, 0, 0x0800)
        else:
            link = b"\x02" * 6 + b"\x04" * 6 + struct.pack(">H", 0x0800)
    else:  # Linux cooked capture
        link = struct.pack(">HHH", 0, 1, 6) + b"\x00" * 8 + struct.pack(">H", 0x0800)
    total_len = 20 + 20 + len(p.payload)
    ip = struct.pack(
        ">BBHHHBBH4s4s",
        0x45, 0, total_len, 0x1234, 0, 64, 6, 0,
        _ip_bytes(p.src), _ip_bytes(p.dst),
    )
    tcp = struct.pack(">HHIIBBHHH", p.sport, p.dport, p.seq, 0, 5 << 4, p.flags, 8192, 0, 0)
    frame = link + ip + tcp + p.payload
    if p.pad_to is not None:
        if p.pad_to < len(frame):
            raise SpecError(f"pad_to {p.pad_to} below frame length {len(frame)}")
        frame += b"\x00" * (p.pad_to - len(frame))
    return frame


def build_pcap(
    packets: list[PacketSpec],
    linktype: int = 1,
    big_endian: bool = False,
    snaplen: int = 65535,
) -> bytes:
    endian = ">" if big_endian else "<"
    magic = b"\xa1\xb2\xc3\xd4" if big_endian else b"\xd4\xc3\xb2\xa1"
    out = bytearray(magic)
    out += struct.pack(endian + "HHiIII", 2, 4, 0, 0, snaplen, linktype)
    for p in packets:
        frame = build_frame(p, linktype)
        ts_sec = int(p.ts)
        ts_usec = int(round((p.ts - ts_sec) * 1e6))
        out += struct.pack(endian + "IIII", ts_sec, ts_usec, len(frame), len(frame))
        out += frame
    return bytes(out)


def swap_directions(packets: list[PacketSpec]) -> list[PacketSpec]:
    """Every packet reversed endpoint-for-endpoint; sizes and times kept."""
    return [
        PacketSpec(
            ts=p.ts, src=p.dst, sport=p.dport, dst=p.src, dport=p.sport,
            flags=p.flags, seq=p.seq, payload=p.payload, pad_to=p.pad_to, vlan=p.vlan,
        )
        for p in packets
    ]


# ---------------------------------------------------------------------------
# corpus generation

_COMMON_PERMS = (
    "android.permission.INTERNET",
    "android.permission.ACCESS_NETWORK_STATE",
    "android.permission.WAKE_LOCK",
    "android.permission.VIBRATE",
)
_MARKER_PERMS = (
    "android.permission.SEND_SMS",
    "android.permission.READ_PHONE_STATE",
    "android.permission.RECEIVE_BOOT_COMPLETED",
    "android.permission.READ_CONTACTS",
)
_COMMON_INVOKES = (
    MethodRef("android.util.Log", "d", "(Ljava/lang/String;Ljava/lang/String;)I"),
    MethodRef("android.app.Activity", "onCreate", "(Landroid/os/Bundle;)V"),
    MethodRef("java.util.ArrayList", "add", "(Ljava/lang/Object;)Z"),
    MethodRef("android.widget.TextView", "setText", "(Ljava/lang/CharSequence;)V"),
)
_MARKER_INVOKES = (
    MethodRef(
        "android.telephony.SmsManager",
        "sendTextMessage",
        "(Ljava/lang/String;Ljava/lang/String;Ljava/lang/String;"
        "Landroid/app/PendingIntent;Landroid/app/PendingIntent;)V",
    ),
    MethodRef("android.telephony.TelephonyManager", "getDeviceId", "()Ljava/lang/String;"),
    MethodRef("java.lang.Runtime", "exec", "(Ljava/lang/String;)Ljava/lang/Process;"),
    MethodRef("dalvik.system.DexClassLoader", "loadClass", "(Ljava/lang/String;)Ljava/lang/Class;"),
)
_COMMON_ADDRESSES = ("https://example.org/index.html", "https://cdn.example.com/assets/app.js")
_MARKER_ADDRESSES = ("http://198.51.100.7/upload", "203.0.113.9")
_COMMON_SYSCALLS = ("openat", "read", "write", "close", "mmap", "futex", "ioctl")
_MARKER_SYSCALLS = ("ptrace", "setuid", "connect", "sendto")
_MARKER_INTENT = "android.intent.action.BOOT_COMPLETED"

ARTIFACT_NAMES = ("apk", "strace", "pcap", "apilog", "callgraph")


def _sample(rng: np.random.Generator, pool: tuple, prob: float) -> list:
    return [item for item in pool if rng.random() < prob]


def _app_spec(rng: np.random.Generator, package: str, malicious: bool) -> ApkSpec:
    marker_p = 0.9 if malicious else 0.05
    perms = _sample(rng, _COMMON_PERMS, 0.8) + _sample(rng, _MARKER_PERMS, marker_p)
    invokes = _sample(rng, _COMMON_INVOKES, 0.8) + _sample(rng, _MARKER_INVOKES, marker_p)
    repeated: list[MethodRef] = []
    for ref in invokes:
        repeated.extend([ref] * int(rng.integers(1, 4)))
    half = max(1, len(repeated) // 2)
    methods = (
        MethodSpec(f"{package}.Main", "onCreate", "()V", tuple(repeated[:half])),
        MethodSpec(f"{package}.Worker", "run", "()V", tuple(repeated[half:]), ("nop",)),
    )
    addresses = tuple(_sample(rng, _COMMON_ADDRESSES, 0.7) + _sample(rng, _MARKER_ADDRESSES, marker_p))
    intents = ("android.intent.action.MAIN",)
    if malicious and rng.random() < 0.9:
        intents = intents + (_MARKER_INTENT,)
    manifest = ManifestSpec(
        package=package,
        permissions=tuple(perms),
        features=("android.hardware.touchscreen",) if rng.random() < 0.6 else (),
        components=(
            ComponentSpec("activity", f"{package}.Main", intents),
            ComponentSpec("service", f"{package}.Worker"),
        ),
    )
    return ApkSpec(
        manifest=manifest,
        methods=methods,
        addresses=addresses,
        noise_strings=("hello world", "config", "999.1.2.3"),
    )


def _app_trace(rng: np.random.Generator, pid: int, malicious: bool) -> tuple[str, list[str]]:
    """Returns (trace text, expected attributed syscall names)."""
    child = pid + 1
    noise_pid = pid + 500
    names: list[str] = []
    lines: list[str] = []
    for name in rng.permutation(np.array(_COMMON_SYSCALLS, dtype=object))[:5]:
        lines.append(strace_call_line(pid, str(name)))
        names.append(str(name))
    lines.append(strace_call_line(pid, "clone", "CLONE_VM", str(child)))
    names.append("clone")
    lines.append(strace_call_line(noise_pid, "read", "3", "11"))
    if malicious:
        for name in _MARKER_SYSCALLS:
            if rng.random() < 0.9:
                first, second = strace_unfinished_lines(child, name)
                lines.append(first)
                lines.append(strace_call_line(noise_pid, "write", "4", "8"))
                lines.append(second)
                names.append(name)
    lines.append(strace_call_line(child, "exit_group", "0", "?"))
    names.append("exit_group")
    return write_strace(lines), names


def _app_pcap(rng: np.random.Generator) -> tuple[bytes, tuple[float, ...]]:
    """One request/response flow; features are computable by hand.

    Packet sizes are IP datagram lengths: 40 header bytes plus the payload.
    """
    out_len = int(rng.integers(60, 200))
    in_len = int(rng.integers(60, 200))
    span = float(rng.choice(np.array([0.5, 1.0, 2.0])))
    packets = [
        PacketSpec(0.0, "10.0.0.2", 40001, "93.184.216.34", 443, flags=0x02,
                   payload=b"\x00" * (out_len - 40)),
        PacketSpec(span, "93.184.216.34", 443, "10.0.0.2", 40001, flags=0x12,
                   payload=b"\x00" * (in_len - 40)),
    ]
    features = (
        (out_len + in_len) / 2.0,
        1.0,
        1.0,
        float(out_len),
        float(in_len),
        in_len / out_len,
        1.0 / span,
    )
    return build_pcap(packets), features


def _app_apilog(rng: np.random.Generator, malicious: bool) -> tuple[str, list[str]]:
    refs = _sample(rng, _COMMON_INVOKES, 0.7)
    if malicious:
        refs += _sample(rng, _MARKER_INVOKES, 0.9)
    refs = refs or [_COMMON_INVOKES[0]]
    canonicals = [r.canonical() for r in refs]
    return "\n".join(canonicals) + "\n", canonicals


def _app_callgraph(package: str, malicious: bool) -> tuple[dict, list[str]]:
    chain = [MethodRef(f"{package}.Main", "onCreate", "()V")] + list(
        _MARKER_INVOKES[:2] if malicious else _COMMON_INVOKES[:2]
    )
    doc = {
        "nodes": [
            {"class": r.class_name, "method": r.method_name, "descriptor": r.descriptor}
            for r in chain
        ],
        "edges": [[i, i + 1] for i in range(len(chain) - 1)],
        "entry": [0],
    }
    # the entry node is app code, so only the platform tail survives filtering
    tokens = [r.canonical() for r in chain[1:]]
    return doc, tokens


def generate_corpus(
    out_dir: str | Path,
    n_benign: int,
    n_malware: int,
    seed: int = 0,
    artifacts: tuple[str, ...] = ARTIFACT_NAMES,
) -> dict:
    """Write a labeled corpus plus ``manifest.csv`` and ``ground_truth.json``.

    Ground truth holds, per app, the exact static records and counts, the
    per-method opcode mnemonics, attributed syscall names, dynamic API
    canonicals, TCP flow features, and call-graph route tokens, all derived
    from the generating specs.
    """
    from .apk import (
        default_api_permission_map,
        default_platform_prefixes,
        default_restricted_patterns,
        default_suspicious_patterns,
    )

    for name in artifacts:
        if name not in ARTIFACT_NAMES:
            raise SpecError(f"unknown artifact {name!r}")
    if n_benign < 0 or n_malware < 0:
        raise SpecError("app counts must be >= 0")
    if (n_benign + n_malware) > 0 and not artifacts:
        raise SpecError("every app needs at least one artifact")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    prefixes = default_platform_prefixes()
    restricted = list(default_restricted_patterns())
    suspicious = list(default_suspicious_patterns())
    perm_map = list(default_api_permission_map())

    rows = []
    truth: dict[str, dict] = {}
    labels = ["benign"] * n_benign + ["malware"] * n_malware
    for i, label in enumerate(labels):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(i,)))
        malicious = label == "malware"
        stem = f"app{i:04d}"
        package = f"com.fix.{label}{i:04d}"
        app_dir = out_dir / stem
        app_dir.mkdir(exist_ok=True)
        row = {"label": label, "apk": "", "strace": "", "pcap": "", "apilog": "", "callgraph": ""}
        entry: dict = {"label": label}

        spec = _app_spec(rng, package, malicious)
        apk_bytes = build_apk(spec)
        app_id = hashlib.sha256(apk_bytes).hexdigest()
        if "apk" in artifacts:
            (app_dir / "app.apk").write_bytes(apk_bytes)
            row["apk"] = f"{stem}/app.apk"
            records, counts = expected_static_records(
                spec, prefixes, restricted, suspicious, perm_map
            )
            entry["static_records"] = sorted(r.line() for r in records)
            entry["static_counts"] = {r.line(): n for r, n in sorted(counts.items())}
            entry["method_mnemonics"] = expected_method_mnemonics(spec)

        if "strace" in artifacts:
            text, names = _app_trace(rng, 1000 + 10 * i, malicious)
            (app_dir / "trace.strace").write_text(text, encoding="utf-8")
            row["strace"] = f"{stem}/trace.strace"
            entry["syscalls"] = names

        if "pcap" in artifacts:
            pcap_bytes, features = _app_pcap(rng)
            (app_dir / "capture.pcap").write_bytes(pcap_bytes)
            row["pcap"] = f"{stem}/capture.pcap"
            entry["tcp_features"] = list(features)

        if "apilog" in artifacts:
            text, canonicals = _app_apilog(rng, malicious)
            (app_dir / "calls.apilog").write_text(text, encoding="utf-8")
            row["apilog"] = f"{stem}/calls.apilog"
            entry["dynamic_apis"] = canonicals

        if "callgraph" in artifacts:
            doc, tokens = _app_callgraph(package, malicious)
            (app_dir / "graph.json").write_text(
                json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8"
            )
            row["callgraph"] = f"{stem}/graph.json"
            entry["route_tokens"] = tokens

        row["app_id"] = app_id
        rows.append(row)
        truth[app_id] = entry

    manifest_path = out_dir / "manifest.csv"
    with open(manifest_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(
            handle, fieldnames=["app_id", "label", "apk", "strace", "pcap", "apilog", "callgraph"]
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(row)

    truth_doc = {"seed": seed, "apps": truth}
    with open(out_dir / "ground_truth.json", "w", encoding="utf-8") as handle:
        json.dump(truth_doc, handle, sort_keys=True, indent=1)
        handle.write("\n")
    return truth_doc
