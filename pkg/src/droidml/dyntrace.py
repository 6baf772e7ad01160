"""Dynamic text-trace ingestion: strace output and API-call logs.

``parse_strace`` consumes ``strace -f -tt`` text, merges unfinished/resumed
call pairs, tracks fork/clone return values to compute the transitive child
closure of the target pids, and keeps only calls made by that closure.
``parse_api_log`` consumes the one-reference-per-line dynamic API log.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidRecord, MalformedLogLine, MalformedTraceLine
from .records import FeatureKind, FeatureRecord, MethodRef

_TS = r"(?:\d[\d:.]*\s+)?"
_NAME = r"(?P<name>[a-z_][a-z0-9_]*)"
_CALL_RE = re.compile(rf"(?P<pid>\d+)\s+{_TS}{_NAME}\((?P<args>.*)\)\s*=\s*(?P<ret>.+)")
_UNFINISHED_RE = re.compile(rf"(?P<pid>\d+)\s+{_TS}{_NAME}\(.*<unfinished \.\.\.>\s*")
_RESUMED_RE = re.compile(rf"(?P<pid>\d+)\s+{_TS}<\.\.\. {_NAME} resumed>(?P<rest>.*)")
_SIGNAL_RE = re.compile(rf"(?P<pid>\d+)\s+{_TS}--- .* ---\s*")
_EXIT_RE = re.compile(rf"(?P<pid>\d+)\s+{_TS}\+\+\+ .* \+\+\+\s*")
_RET_INT_RE = re.compile(r"-?\d+")

FORK_FAMILY = frozenset(("fork", "vfork", "clone", "clone2", "clone3"))


@dataclass
class SyscallTrace:
    """Ordered (pid, name) call list attributed to the traced app."""

    app_id: str
    calls: list[tuple[int, str]] = field(default_factory=list)

    @property
    def names(self) -> list[str]:
        return [name for _, name in self.calls]


def _return_value(ret_text: str) -> int | None:
    m = _RET_INT_RE.match(ret_text.strip())
    return int(m.group()) if m else None


def _parse_lines(text: str) -> list[tuple[int, str, int | None]]:
    """All syscall events as (pid, name, int return or None), in file order."""
    events: list[tuple[int, str, int | None]] = []
    pending: dict[int, tuple[int, str]] = {}  # pid -> (event index, name)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip()
        if not line.strip():
            continue
        m = _CALL_RE.fullmatch(line)
        if m:
            events.append((int(m.group("pid")), m.group("name"), _return_value(m.group("ret"))))
            continue
        m = _UNFINISHED_RE.fullmatch(line)
        if m:
            pid = int(m.group("pid"))
            pending[pid] = (len(events), m.group("name"))
            events.append((pid, m.group("name"), None))
            continue
        m = _RESUMED_RE.fullmatch(line)
        if m:
            pid = int(m.group("pid"))
            started = pending.pop(pid, None)
            # orphan or mismatched resumption: keep the unfinished record as-is
            if started is not None and started[1] == m.group("name"):
                idx = started[0]
                ret_m = re.search(r"=\s*(?P<ret>.+)$", m.group("rest"))
                ret = _return_value(ret_m.group("ret")) if ret_m else None
                events[idx] = (pid, started[1], ret)
            continue
        if _SIGNAL_RE.fullmatch(line) or _EXIT_RE.fullmatch(line):
            continue
        raise MalformedTraceLine(lineno, line)
    return events


def _pid_closure(events: list[tuple[int, str, int | None]], targets: set[int]) -> set[int]:
    edges: list[tuple[int, int]] = []
    for pid, name, ret in events:
        if name in FORK_FAMILY and ret is not None and ret > 0:
            edges.append((pid, ret))
    closure = set(targets)
    changed = True
    while changed:
        changed = False
        for parent, child in edges:
            if parent in closure and child not in closure:
                closure.add(child)
                changed = True
    return closure


def parse_strace(
    path: str | Path | None = None,
    text: str | None = None,
    *,
    target_pids: set[int] | None = None,
    app_id: str | None = None,
) -> SyscallTrace:
    """Parse an ``strace -f`` capture down to the traced app's call list.

    ``target_pids`` seeds the process closure; when omitted, the pid of the
    first line is used (per-app traces start with the app process). The
    default ``app_id`` is the sha-256 of the trace bytes.
    """
    if text is None:
        if path is None:
            raise ValueError("need a path or text")
        data = Path(path).read_bytes()
        text = data.decode("utf-8", errors="replace")
    else:
        data = text.encode("utf-8")
    if app_id is None:
        app_id = hashlib.sha256(data).hexdigest()

    events = _parse_lines(text)
    if target_pids is None:
        target_pids = {events[0][0]} if events else set()
    closure = _pid_closure(events, set(target_pids))
    calls = [(pid, name) for pid, name, _ in events if pid in closure]
    return SyscallTrace(app_id=app_id, calls=calls)


def syscall_records(trace: SyscallTrace) -> tuple[set[FeatureRecord], dict[FeatureRecord, int]]:
    """Distinct SyscallName records plus occurrence counts."""
    records: set[FeatureRecord] = set()
    counts: dict[FeatureRecord, int] = {}
    for name in trace.names:
        rec = FeatureRecord(FeatureKind.SYSCALL_NAME, name)
        records.add(rec)
        counts[rec] = counts.get(rec, 0) + 1
    return records, counts


@dataclass
class DynamicApiLog:
    """Ordered method references observed at runtime."""

    app_id: str
    calls: list[MethodRef] = field(default_factory=list)


def parse_api_log(
    path: str | Path | None = None, text: str | None = None, *, app_id: str | None = None
) -> DynamicApiLog:
    """Parse a dynamic API log: one ``class.method(descriptor)`` per line."""
    if text is None:
        if path is None:
            raise ValueError("need a path or text")
        data = Path(path).read_bytes()
        text = data.decode("utf-8", errors="replace")
    else:
        data = text.encode("utf-8")
    if app_id is None:
        app_id = hashlib.sha256(data).hexdigest()

    calls: list[MethodRef] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        try:
            calls.append(MethodRef.parse(line))
        except InvalidRecord:
            raise MalformedLogLine(lineno, line) from None
    return DynamicApiLog(app_id=app_id, calls=calls)


def dynamic_api_records(log: DynamicApiLog) -> tuple[set[FeatureRecord], dict[FeatureRecord, int]]:
    records: set[FeatureRecord] = set()
    counts: dict[FeatureRecord, int] = {}
    for ref in log.calls:
        rec = FeatureRecord(FeatureKind.DYNAMIC_API_CALL, ref.canonical())
        records.add(rec)
        counts[rec] = counts.get(rec, 0) + 1
    return records, counts
