"""Dex bytecode container parsing.

Decodes the header, id tables, class definitions, and code items of a
``classes.dex`` buffer directly (no disassembler dependency). The parser is
strict: offsets are bounds-checked, the declared file size must match the
buffer, and the adler32 checksum is verified, so corrupted inputs surface as
:class:`MalformedDex` rather than garbage output.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

from .dalvik import iter_instructions
from .errors import MalformedDex
from .records import MethodRef, OpcodeId

DEX_MAGIC_PREFIX = b"dex\n"
SUPPORTED_VERSIONS = (b"035", b"036", b"037", b"038", b"039")
ENDIAN_CONSTANT = 0x12345678
HEADER_SIZE = 0x70

NO_INDEX = 0xFFFFFFFF


class _Reader:
    """Bounds-checked little-endian accessor over a dex buffer."""

    def __init__(self, data: bytes, name: str) -> None:
        self.data = data
        self.name = name

    def fail(self, offset: int, reason: str) -> MalformedDex:
        return MalformedDex(self.name, offset, reason)

    def _need(self, offset: int, n: int) -> None:
        if offset < 0 or offset + n > len(self.data):
            raise self.fail(offset, f"read of {n} bytes past end")

    def u8(self, offset: int) -> int:
        self._need(offset, 1)
        return self.data[offset]

    def u16(self, offset: int) -> int:
        self._need(offset, 2)
        return struct.unpack_from("<H", self.data, offset)[0]

    def u32(self, offset: int) -> int:
        self._need(offset, 4)
        return struct.unpack_from("<I", self.data, offset)[0]

    def raw(self, offset: int, n: int) -> bytes:
        self._need(offset, n)
        return self.data[offset : offset + n]

    def uleb128(self, offset: int) -> tuple[int, int]:
        """Returns (value, byte length). Capped at 5 bytes per the format."""
        value = 0
        shift = 0
        for i in range(5):
            b = self.u8(offset + i)
            value |= (b & 0x7F) << shift
            if not b & 0x80:
                return value, i + 1
            shift += 7
        raise self.fail(offset, "uleb128 too long")


def _decode_mutf8(r: _Reader, offset: int) -> tuple[str, int]:
    """Decode a NUL-terminated modified-UTF-8 run; returns (text, byte length)."""
    units: list[int] = []
    i = offset
    while True:
        b = r.u8(i)
        if b == 0:
            i += 1
            break
        if b < 0x80:
            units.append(b)
            i += 1
        elif b >> 5 == 0b110:
            b1 = r.u8(i + 1)
            if b1 >> 6 != 0b10:
                raise r.fail(i, "bad mutf8 continuation")
            units.append(((b & 0x1F) << 6) | (b1 & 0x3F))
            i += 2
        elif b >> 4 == 0b1110:
            b1, b2 = r.u8(i + 1), r.u8(i + 2)
            if b1 >> 6 != 0b10 or b2 >> 6 != 0b10:
                raise r.fail(i, "bad mutf8 continuation")
            units.append(((b & 0x0F) << 12) | ((b1 & 0x3F) << 6) | (b2 & 0x3F))
            i += 3
        else:
            raise r.fail(i, f"bad mutf8 lead byte 0x{b:02x}")
    # units are UTF-16 code units; surrogate pairs combine, lone ones are invalid
    try:
        text = b"".join(struct.pack("<H", u) for u in units).decode("utf-16-le")
    except UnicodeDecodeError:
        raise r.fail(offset, "unpaired surrogate in string") from None
    return text, i - offset


def descriptor_to_dotted(descriptor: str) -> str:
    """``Lcom/example/Main;`` becomes ``com.example.Main``; others pass through."""
    if descriptor.startswith("L") and descriptor.endswith(";"):
        return descriptor[1:-1].replace("/", ".")
    return descriptor


@dataclass
class DexMethod:
    """A method defined in this dex, with its decoded body."""

    ref: MethodRef
    opcodes: list[OpcodeId]
    invoked: list[MethodRef] = field(default_factory=list)


@dataclass
class DexFile:
    strings: list[str]
    type_descriptors: list[str]
    method_refs: list[MethodRef]
    methods: list[DexMethod]

    @property
    def opcode_sequence(self) -> list[OpcodeId]:
        flat: list[OpcodeId] = []
        for m in self.methods:
            flat.extend(m.opcodes)
        return flat


def parse_dex(data: bytes, name: str = "classes.dex") -> DexFile:
    r = _Reader(data, name)
    if len(data) < HEADER_SIZE:
        raise r.fail(0, f"buffer shorter than header ({len(data)} bytes)")
    if data[:4] != DEX_MAGIC_PREFIX or data[7:8] != b"\x00":
        raise r.fail(0, "bad magic")
    if data[4:7] not in SUPPORTED_VERSIONS:
        raise r.fail(4, f"unsupported dex version {data[4:7]!r}")
    checksum = r.u32(8)
    if zlib.adler32(data[12:]) & 0xFFFFFFFF != checksum:
        raise r.fail(8, "checksum mismatch")
    file_size = r.u32(0x20)
    if file_size != len(data):
        raise r.fail(0x20, f"declared size {file_size} != {len(data)}")
    if r.u32(0x24) < HEADER_SIZE:
        raise r.fail(0x24, "header size too small")
    if r.u32(0x28) != ENDIAN_CONSTANT:
        raise r.fail(0x28, "unsupported byte order")

    string_ids_size, string_ids_off = r.u32(0x38), r.u32(0x3C)
    type_ids_size, type_ids_off = r.u32(0x40), r.u32(0x44)
    proto_ids_size, proto_ids_off = r.u32(0x48), r.u32(0x4C)
    method_ids_size, method_ids_off = r.u32(0x58), r.u32(0x5C)
    class_defs_size, class_defs_off = r.u32(0x60), r.u32(0x64)

    strings: list[str] = []
    for i in range(string_ids_size):
        data_off = r.u32(string_ids_off + 4 * i)
        declared_utf16, n = r.uleb128(data_off)
        text, _ = _decode_mutf8(r, data_off + n)
        actual_utf16 = len(text.encode("utf-16-le")) // 2
        if actual_utf16 != declared_utf16:
            raise r.fail(data_off, f"utf16 length {actual_utf16} != declared {declared_utf16}")
        strings.append(text)

    def string_at(idx: int, ctx_off: int) -> str:
        if idx >= len(strings):
            raise r.fail(ctx_off, f"string index {idx} out of range")
        return strings[idx]

    type_descriptors: list[str] = []
    for i in range(type_ids_size):
        off = type_ids_off + 4 * i
        type_descriptors.append(string_at(r.u32(off), off))

    def type_at(idx: int, ctx_off: int) -> str:
        if idx >= len(type_descriptors):
            raise r.fail(ctx_off, f"type index {idx} out of range")
        return type_descriptors[idx]

    # proto_ids -> full descriptor strings "(params)return"
    proto_descriptors: list[str] = []
    for i in range(proto_ids_size):
        off = proto_ids_off + 12 * i
        return_idx = r.u32(off + 4)
        params_off = r.u32(off + 8)
        params: list[str] = []
        if params_off:
            count = r.u32(params_off)
            for j in range(count):
                params.append(type_at(r.u16(params_off + 4 + 2 * j), params_off))
        proto_descriptors.append("(" + "".join(params) + ")" + type_at(return_idx, off))

    method_refs: list[MethodRef] = []
    for i in range(method_ids_size):
        off = method_ids_off + 8 * i
        class_idx = r.u16(off)
        proto_idx = r.u16(off + 2)
        name_idx = r.u32(off + 4)
        if proto_idx >= len(proto_descriptors):
            raise r.fail(off + 2, f"proto index {proto_idx} out of range")
        method_refs.append(
            MethodRef(
                class_name=descriptor_to_dotted(type_at(class_idx, off)),
                method_name=string_at(name_idx, off + 4),
                descriptor=proto_descriptors[proto_idx],
            )
        )

    def parse_code_item(code_off: int, ref: MethodRef) -> DexMethod:
        insns_size = r.u32(code_off + 12)
        insns = r.raw(code_off + 16, insns_size * 2)
        opcodes: list[OpcodeId] = []
        invoked: list[MethodRef] = []
        for unit_off, info, method_idx in iter_instructions(
            insns, lambda u, reason: r.fail(code_off + 16 + u * 2, reason)
        ):
            opcodes.append(OpcodeId(info.code, info.mnemonic))
            if method_idx is not None:
                if method_idx >= len(method_refs):
                    raise r.fail(code_off + 16 + unit_off * 2, f"method index {method_idx} out of range")
                invoked.append(method_refs[method_idx])
        return DexMethod(ref=ref, opcodes=opcodes, invoked=invoked)

    methods: list[DexMethod] = []
    for i in range(class_defs_size):
        off = class_defs_off + 32 * i
        class_data_off = r.u32(off + 24)
        if not class_data_off:
            continue
        pos = class_data_off
        static_fields, n = r.uleb128(pos)
        pos += n
        instance_fields, n = r.uleb128(pos)
        pos += n
        direct_methods, n = r.uleb128(pos)
        pos += n
        virtual_methods, n = r.uleb128(pos)
        pos += n
        for _ in range(static_fields + instance_fields):
            _, n = r.uleb128(pos)  # field_idx_diff
            pos += n
            _, n = r.uleb128(pos)  # access_flags
            pos += n
        for group_size in (direct_methods, virtual_methods):
            method_idx = 0
            for _ in range(group_size):
                diff, n = r.uleb128(pos)
                pos += n
                _, n = r.uleb128(pos)  # access_flags
                pos += n
                code_off, n = r.uleb128(pos)
                pos += n
                method_idx += diff
                if method_idx >= len(method_refs):
                    raise r.fail(pos, f"defined method index {method_idx} out of range")
                if code_off:
                    methods.append(parse_code_item(code_off, method_refs[method_idx]))

    return DexFile(
        strings=strings,
        type_descriptors=type_descriptors,
        method_refs=method_refs,
        methods=methods,
    )
