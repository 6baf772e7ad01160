"""Feature records, method references, and per-app feature reports.

A :class:`FeatureRecord` is one named observation about an app (a requested
permission, a called platform API, a contacted host, ...). Records serialize
to single lines of the form ``<KindName>::<value>`` so that reports are plain
sorted text files that diff cleanly.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from .errors import InvalidRecord

_APP_ID_RE = re.compile(r"[0-9a-f]{64}")
_LINE_RE = re.compile(r"(?P<kind>[A-Za-z]+)::(?P<value>.+)", re.DOTALL)


def is_app_id(value: str) -> bool:
    """True when ``value`` is a lowercase sha-256 hex digest."""
    return bool(_APP_ID_RE.fullmatch(value))


class Source(enum.Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"
    HYBRID = "hybrid"


class FeatureKind(enum.Enum):
    """Every record kind the extractors can produce."""

    # static
    HARDWARE_COMPONENT = "HardwareComponent"
    REQUESTED_PERMISSION = "RequestedPermission"
    APP_COMPONENT = "AppComponent"
    FILTERED_INTENT = "FilteredIntent"
    RESTRICTED_API_CALL = "RestrictedApiCall"
    USED_PERMISSION = "UsedPermission"
    SUSPICIOUS_API_CALL = "SuspiciousApiCall"
    NETWORK_ADDRESS = "NetworkAddress"
    API_CALL = "ApiCall"
    # dynamic
    SYSCALL_NAME = "SyscallName"
    DYNAMIC_API_CALL = "DynamicApiCall"
    HTTP_HOST = "HttpHost"
    HTTP_REQUEST_URI = "HttpRequestUri"
    HTTP_REQUEST_METHOD = "HttpRequestMethod"
    HTTP_USER_AGENT = "HttpUserAgent"


_KIND_BY_NAME = {k.value: k for k in FeatureKind}

STATIC_KINDS = frozenset(
    (
        FeatureKind.HARDWARE_COMPONENT,
        FeatureKind.REQUESTED_PERMISSION,
        FeatureKind.APP_COMPONENT,
        FeatureKind.FILTERED_INTENT,
        FeatureKind.RESTRICTED_API_CALL,
        FeatureKind.USED_PERMISSION,
        FeatureKind.SUSPICIOUS_API_CALL,
        FeatureKind.NETWORK_ADDRESS,
        FeatureKind.API_CALL,
    )
)
DYNAMIC_KINDS = frozenset(set(FeatureKind) - STATIC_KINDS)


@dataclass(frozen=True)
class FeatureRecord:
    kind: FeatureKind
    value: str

    def __post_init__(self) -> None:
        if not self.value:
            raise InvalidRecord("record value must be non-empty")
        if "\n" in self.value or "\r" in self.value:
            raise InvalidRecord("record value must not contain newlines")

    def line(self) -> str:
        return f"{self.kind.value}::{self.value}"

    @classmethod
    def parse_line(cls, text: str) -> "FeatureRecord":
        m = _LINE_RE.fullmatch(text)
        if not m or m.group("kind") not in _KIND_BY_NAME:
            raise InvalidRecord(f"bad record line: {text[:120]!r}")
        return cls(_KIND_BY_NAME[m.group("kind")], m.group("value"))

    def __lt__(self, other: "FeatureRecord") -> bool:
        return self.line() < other.line()


@dataclass(frozen=True)
class MethodRef:
    """A fully qualified method reference.

    ``class_name`` is dotted (``java.lang.String``); ``descriptor`` is the
    raw signature (``(II)V``). The canonical string form used everywhere in
    feature values is ``<class>.<method><descriptor>``.
    """

    class_name: str
    method_name: str
    descriptor: str

    def canonical(self) -> str:
        return f"{self.class_name}.{self.method_name}{self.descriptor}"

    @classmethod
    def parse(cls, text: str) -> "MethodRef":
        paren = text.find("(")
        if paren <= 0:
            raise InvalidRecord(f"bad method reference: {text!r}")
        head, descriptor = text[:paren], text[paren:]
        dot = head.rfind(".")
        if dot <= 0 or dot == len(head) - 1:
            raise InvalidRecord(f"bad method reference: {text!r}")
        return cls(head[:dot], head[dot + 1 :], descriptor)


@dataclass(frozen=True)
class OpcodeId:
    """One Dalvik opcode occurrence (primary byte + mnemonic)."""

    code: int
    mnemonic: str


@dataclass
class FeatureReport:
    """Everything extracted from one app's artifacts.

    ``records`` is the set of distinct feature records; ``counts`` carries
    occurrence multiplicities for the kinds where counting is meaningful
    (absent keys count as 1). ``method_opcodes`` lists per-method opcode
    sequences in declaration order; the flat ``opcode_sequence`` is their
    concatenation.
    """

    app_id: str
    source: Source
    records: set[FeatureRecord] = field(default_factory=set)
    counts: dict[FeatureRecord, int] = field(default_factory=dict)
    method_opcodes: list[list[OpcodeId]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not is_app_id(self.app_id):
            raise ValueError(f"app_id must be a sha-256 hex digest, got {self.app_id!r}")

    @property
    def opcode_sequence(self) -> list[OpcodeId]:
        flat: list[OpcodeId] = []
        for seq in self.method_opcodes:
            flat.extend(seq)
        return flat

    def count(self, record: FeatureRecord) -> int:
        if record not in self.records:
            return 0
        return self.counts.get(record, 1)

    def values(self, kind: FeatureKind) -> set[str]:
        return {r.value for r in self.records if r.kind is kind}

    def serialize(self) -> str:
        """Sorted record lines, one per line, trailing newline when non-empty."""
        lines = sorted(r.line() for r in self.records)
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def deserialize(cls, text: str, app_id: str, source: Source) -> "FeatureReport":
        records = set()
        for raw in text.splitlines():
            if raw.strip():
                records.add(FeatureRecord.parse_line(raw))
        return cls(app_id=app_id, source=source, records=records)


def serialize_counts(counts: dict[str, int]) -> str:
    """``name<TAB>count`` lines sorted by name."""
    lines = [f"{name}\t{counts[name]}" for name in sorted(counts)]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_counts(text: str) -> dict[str, int]:
    out: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        name, sep, cnt = raw.rpartition("\t")
        if not sep or not cnt.isdigit():
            raise InvalidRecord(f"bad count line {lineno}: {raw[:120]!r}")
        out[name] = int(cnt)
    return out
