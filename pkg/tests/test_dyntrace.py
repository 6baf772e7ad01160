from __future__ import annotations

import pytest

from droidml.dyntrace import (
    dynamic_api_records,
    parse_api_log,
    parse_strace,
    syscall_records,
)
from droidml.errors import MalformedLogLine, MalformedTraceLine
from droidml.fixtures import strace_call_line, strace_unfinished_lines
from droidml.records import FeatureKind

APP = "b" * 64


def trace_text(lines: list[str]) -> str:
    return "\n".join(lines) + "\n"


def test_single_process_names_in_order():
    text = trace_text(
        [
            strace_call_line(100, "openat", '"/data/x"', "3"),
            strace_call_line(100, "read", "3, buf, 512", "512"),
            strace_call_line(100, "close", "3"),
        ]
    )
    trace = parse_strace(text=text, app_id=APP)
    assert trace.names == ["openat", "read", "close"]


def test_other_pids_excluded_without_fork_edge():
    text = trace_text(
        [
            strace_call_line(100, "openat", '"/x"', "3"),
            strace_call_line(999, "write", "1, buf, 4", "4"),
            strace_call_line(100, "close", "3"),
        ]
    )
    trace = parse_strace(text=text, app_id=APP)
    assert trace.names == ["openat", "close"]


def test_fork_family_joins_children():
    text = trace_text(
        [
            strace_call_line(100, "openat", '"/x"', "3"),
            strace_call_line(100, "clone", "child_stack=NULL", "101"),
            strace_call_line(101, "setuid", "0"),
            strace_call_line(999, "read", "9", "1"),
            strace_call_line(101, "fork", "", "102"),
            strace_call_line(102, "ptrace", "PTRACE_TRACEME"),
        ]
    )
    trace = parse_strace(text=text, app_id=APP)
    assert trace.names == ["openat", "clone", "setuid", "fork", "ptrace"]


def test_unfinished_resumed_merges_at_invocation_position():
    first, second = strace_unfinished_lines(100, "connect", "5, addr", "0")
    text = trace_text(
        [
            strace_call_line(100, "openat", '"/x"', "3"),
            first,
            strace_call_line(100, "getpid", "", "100"),
            second,
            strace_call_line(100, "close", "3"),
        ]
    )
    trace = parse_strace(text=text, app_id=APP)
    assert trace.names == ["openat", "connect", "getpid", "close"]


def test_signals_and_exits_are_skipped():
    text = trace_text(
        [
            strace_call_line(100, "openat", '"/x"', "3"),
            "100  --- SIGCHLD {si_signo=SIGCHLD} ---",
            strace_call_line(100, "close", "3"),
            "100  +++ exited with 0 +++",
        ]
    )
    trace = parse_strace(text=text, app_id=APP)
    assert trace.names == ["openat", "close"]


def test_timestamps_are_tolerated():
    text = trace_text(
        [
            "100  1700000000.123456 openat(\"/x\") = 3",
            "100  1700000000.223456 close(3) = 0",
        ]
    )
    trace = parse_strace(text=text, app_id=APP)
    assert trace.names == ["openat", "close"]


def test_first_line_pid_seeds_the_closure():
    text = trace_text(
        [
            strace_call_line(200, "openat", '"/x"', "3"),
            strace_call_line(100, "read", "3", "1"),
        ]
    )
    trace = parse_strace(text=text, app_id=APP)
    assert trace.names == ["openat"]
    trace2 = parse_strace(text=text, target_pids={100}, app_id=APP)
    assert trace2.names == ["read"]


def test_malformed_line_is_typed_with_line_number():
    text = trace_text(
        [
            strace_call_line(100, "openat", '"/x"', "3"),
            "garbage that is not a call",
        ]
    )
    with pytest.raises(MalformedTraceLine) as exc:
        parse_strace(text=text, app_id=APP)
    assert exc.value.line_number == 2


def test_blank_lines_are_fine():
    text = "\n" + strace_call_line(100, "openat", '"/x"', "3") + "\n\n"
    assert parse_strace(text=text, app_id=APP).names == ["openat"]


def test_negative_and_error_returns_kept():
    text = trace_text(
        [strace_call_line(100, "connect", "3, addr", "-1 ECONNREFUSED (Connection refused)")]
    )
    assert parse_strace(text=text, app_id=APP).names == ["connect"]


def test_syscall_records_counts():
    text = trace_text(
        [
            strace_call_line(100, "read", "3", "1"),
            strace_call_line(100, "read", "3", "1"),
            strace_call_line(100, "close", "3"),
        ]
    )
    records, counts = syscall_records(parse_strace(text=text, app_id=APP))
    assert {r.value for r in records} == {"read", "close"}
    assert all(r.kind is FeatureKind.SYSCALL_NAME for r in records)
    by_value = {r.value: n for r, n in counts.items()}
    assert by_value == {"read": 2, "close": 1}


def test_api_log_round_trip():
    text = "android.util.Log.d(Ljava/lang/String;Ljava/lang/String;)I\n" * 2
    log = parse_api_log(text=text, app_id=APP)
    assert len(log.calls) == 2
    assert log.calls[0].class_name == "android.util.Log"
    records, counts = dynamic_api_records(log)
    assert len(records) == 1
    rec = next(iter(records))
    assert rec.kind is FeatureKind.DYNAMIC_API_CALL
    assert counts[rec] == 2


def test_api_log_rejects_bad_lines():
    with pytest.raises(MalformedLogLine) as exc:
        parse_api_log(text="android.util.Log.d(I)I\nnot a method line\n", app_id=APP)
    assert exc.value.line_number == 2
