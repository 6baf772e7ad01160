"""Static APK feature extraction.

Opens the APK container, decodes the binary manifest and every dex entry, and
assembles a :class:`FeatureReport`: manifest declarations, platform API calls
(with occurrence counts), network addresses found in dex string pools, and the
derived restricted/suspicious/used-permission records driven by the bundled
pattern files.
"""

from __future__ import annotations

import hashlib
import io
import json
import re
import zipfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .axml import parse_manifest
from .dex import DexFile, parse_dex
from .errors import (
    MalformedDex,
    MalformedManifest,
    MalformedMapFile,
    MalformedPatternFile,
    MissingManifest,
    NotAZip,
    SchemaViolation,
)
from .records import FeatureKind, FeatureRecord, FeatureReport, MethodRef, Source

MANIFEST_NAME = "AndroidManifest.xml"
_DEX_NAME_RE = re.compile(r"classes(\d*)\.dex")

_URL_RE = re.compile(r"https?://[A-Za-z0-9.\-]+(?::\d+)?(?:/[^\s]*)?")
_IPV4_RE = re.compile(r"(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})")


def _data_text(filename: str) -> str:
    return resources.files("droidml.data").joinpath(filename).read_text(encoding="utf-8")


def default_platform_prefixes() -> tuple[str, ...]:
    return tuple(load_pattern_lines(_data_text("platform_prefixes.txt")))


def default_restricted_patterns() -> tuple[str, ...]:
    return tuple(load_pattern_lines(_data_text("restricted_api.txt")))


def default_suspicious_patterns() -> tuple[str, ...]:
    return tuple(load_pattern_lines(_data_text("suspicious_api.txt")))


def default_api_permission_map() -> tuple[tuple[str, str], ...]:
    return tuple(load_map_lines(_data_text("api_permission_map.txt")))


def load_pattern_lines(text: str) -> list[str]:
    """Pattern file grammar: `#` comments, one whitespace-free pattern per line."""
    patterns: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if any(c.isspace() for c in line):
            raise MalformedPatternFile(lineno, "pattern contains whitespace")
        patterns.append(line)
    return patterns


def load_pattern_file(path: str | Path) -> list[str]:
    return load_pattern_lines(Path(path).read_text(encoding="utf-8"))


def load_map_lines(text: str) -> list[tuple[str, str]]:
    """Map file grammar: `#` comments, `pattern<TAB>permission` per line."""
    entries: list[tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise MalformedMapFile(lineno, "expected pattern<TAB>permission")
        if any(c.isspace() for c in parts[0]) or any(c.isspace() for c in parts[1]):
            raise MalformedMapFile(lineno, "fields contain whitespace")
        entries.append((parts[0], parts[1]))
    return entries


def load_api_permission_map(path: str | Path) -> list[tuple[str, str]]:
    return load_map_lines(Path(path).read_text(encoding="utf-8"))


def is_platform_class(class_name: str, prefixes: tuple[str, ...]) -> bool:
    return class_name.startswith(prefixes)


def pattern_matches(pattern: str, canonical: str) -> bool:
    """Trailing `.` = class prefix; `(` present = exact; else class.method match."""
    if pattern.endswith("."):
        return canonical.startswith(pattern)
    if "(" in pattern:
        return canonical == pattern
    return canonical.partition("(")[0] == pattern


def extract_network_addresses(strings: list[str]) -> set[str]:
    """String-pool entries that are http(s) URLs or in-range dotted-quad IPv4s."""
    found: set[str] = set()
    for s in strings:
        if _URL_RE.fullmatch(s):
            found.add(s)
            continue
        m = _IPV4_RE.fullmatch(s)
        if m and all(int(octet) <= 255 for octet in m.groups()):
            found.add(s)
    return found


def extract_api_calls(dex: DexFile, prefixes: tuple[str, ...]) -> dict[MethodRef, int]:
    """Invoke targets whose class is platform-prefixed, with call-site counts."""
    counts: dict[MethodRef, int] = {}
    for method in dex.methods:
        for ref in method.invoked:
            if is_platform_class(ref.class_name, prefixes):
                counts[ref] = counts.get(ref, 0) + 1
    return counts


def match_api_lists(
    report: FeatureReport, restricted: list[str], suspicious: list[str]
) -> FeatureReport:
    """Add one RestrictedApiCall / SuspiciousApiCall record per matched pattern."""
    calls = report.values(FeatureKind.API_CALL)
    for patterns, kind in (
        (restricted, FeatureKind.RESTRICTED_API_CALL),
        (suspicious, FeatureKind.SUSPICIOUS_API_CALL),
    ):
        for pattern in patterns:
            if any(pattern_matches(pattern, call) for call in calls):
                report.records.add(FeatureRecord(kind, pattern))
    return report


def derive_used_permissions(
    report: FeatureReport, api_perm_map: list[tuple[str, str]]
) -> FeatureReport:
    """Add UsedPermission records where a mapped API appears AND is requested."""
    calls = report.values(FeatureKind.API_CALL)
    requested = report.values(FeatureKind.REQUESTED_PERMISSION)
    for pattern, permission in api_perm_map:
        if permission not in requested:
            continue
        if any(pattern_matches(pattern, call) for call in calls):
            report.records.add(FeatureRecord(FeatureKind.USED_PERMISSION, permission))
    return report


def _dex_entry_order(names: list[str]) -> list[str]:
    entries = []
    for n in names:
        m = _DEX_NAME_RE.fullmatch(n)
        if m:
            entries.append((int(m.group(1) or "1"), n))
    return [n for _, n in sorted(entries)]


def parse_apk(
    path: str | Path | None = None,
    data: bytes | None = None,
    *,
    platform_prefixes: tuple[str, ...] | None = None,
    restricted: list[str] | None = None,
    suspicious: list[str] | None = None,
    api_perm_map: list[tuple[str, str]] | None = None,
) -> FeatureReport:
    """Extract the full static feature report for one APK.

    Pass either a filesystem ``path`` or raw ``data`` bytes. The app id is
    the sha-256 of the container bytes. Passing ``None`` for the pattern
    arguments selects the bundled sample data files; pass empty lists to
    disable the corresponding enrichment.
    """
    if data is None:
        if path is None:
            raise ValueError("need a path or data bytes")
        data = Path(path).read_bytes()
    app_id = hashlib.sha256(data).hexdigest()
    if platform_prefixes is None:
        platform_prefixes = default_platform_prefixes()
    if restricted is None:
        restricted = list(default_restricted_patterns())
    if suspicious is None:
        suspicious = list(default_suspicious_patterns())
    if api_perm_map is None:
        api_perm_map = list(default_api_permission_map())

    # stdlib zipfile raises a zoo of exception types on corrupt input
    # (BadZipFile, NotImplementedError, RuntimeError, ValueError, zlib
    # errors), so entry extraction is translated wholesale
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except Exception as e:
        raise NotAZip(f"not a readable zip container: {e}") from None

    with zf:
        names = zf.namelist()
        if MANIFEST_NAME not in names:
            raise MissingManifest(f"no {MANIFEST_NAME} entry")
        try:
            manifest_bytes = zf.read(MANIFEST_NAME)
        except Exception as e:
            raise MalformedManifest(0, f"container entry unreadable: {e}") from None
        model = parse_manifest(manifest_bytes)

        dex_files: list[DexFile] = []
        for entry in _dex_entry_order(names):
            try:
                dex_bytes = zf.read(entry)
            except Exception as e:
                raise MalformedDex(entry, 0, f"container entry unreadable: {e}") from None
            dex_files.append(parse_dex(dex_bytes, entry))

    records: set[FeatureRecord] = set()
    counts: dict[FeatureRecord, int] = {}
    for perm in model.permissions:
        records.add(FeatureRecord(FeatureKind.REQUESTED_PERMISSION, perm))
    for feat in model.features:
        records.add(FeatureRecord(FeatureKind.HARDWARE_COMPONENT, feat))
    for comp in model.components:
        records.add(FeatureRecord(FeatureKind.APP_COMPONENT, comp))
    for intent in model.intent_filters:
        records.add(FeatureRecord(FeatureKind.FILTERED_INTENT, intent))

    method_opcodes = []
    for dex in dex_files:
        for ref, n in extract_api_calls(dex, platform_prefixes).items():
            rec = FeatureRecord(FeatureKind.API_CALL, ref.canonical())
            records.add(rec)
            counts[rec] = counts.get(rec, 0) + n
        for addr in extract_network_addresses(dex.strings):
            records.add(FeatureRecord(FeatureKind.NETWORK_ADDRESS, addr))
        for method in dex.methods:
            method_opcodes.append(list(method.opcodes))

    report = FeatureReport(
        app_id=app_id,
        source=Source.STATIC,
        records=records,
        counts=counts,
        method_opcodes=method_opcodes,
    )
    match_api_lists(report, restricted, suspicious)
    derive_used_permissions(report, api_perm_map)
    return report


@dataclass
class CallGraph:
    """A recorded call graph: method nodes, ordered edges, entry indices."""

    nodes: list[MethodRef] = field(default_factory=list)
    edges: list[tuple[int, int]] = field(default_factory=list)
    entry_points: list[int] = field(default_factory=list)


def load_call_graph(path: str | Path) -> CallGraph:
    """Load a call-graph JSON file, validating indices against the node list."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise SchemaViolation("/", f"not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise SchemaViolation("/", "expected an object")
    for key in ("nodes", "edges", "entry"):
        if key not in doc or not isinstance(doc[key], list):
            raise SchemaViolation(f"/{key}", "missing or not an array")

    nodes: list[MethodRef] = []
    for i, node in enumerate(doc["nodes"]):
        if not isinstance(node, dict):
            raise SchemaViolation(f"/nodes/{i}", "expected an object")
        for key in ("class", "method", "descriptor"):
            if not isinstance(node.get(key), str):
                raise SchemaViolation(f"/nodes/{i}/{key}", "missing or not a string")
        nodes.append(MethodRef(node["class"], node["method"], node["descriptor"]))

    edges: list[tuple[int, int]] = []
    for i, edge in enumerate(doc["edges"]):
        if not isinstance(edge, list) or len(edge) != 2:
            raise SchemaViolation(f"/edges/{i}", "expected an index pair")
        for j, v in enumerate(edge):
            if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v < len(nodes):
                raise SchemaViolation(f"/edges/{i}/{j}", f"invalid node index {v!r}")
        edges.append((edge[0], edge[1]))

    entry: list[int] = []
    for i, v in enumerate(doc["entry"]):
        if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v < len(nodes):
            raise SchemaViolation(f"/entry/{i}", f"invalid node index {v!r}")
        entry.append(v)

    return CallGraph(nodes=nodes, edges=edges, entry_points=entry)
