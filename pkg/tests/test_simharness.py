"""Deterministic protocol exploration and trace validation."""

from __future__ import annotations

import pytest

from teamsteal.errors import ConfigurationError
from teamsteal.regword import RegistrationWord
from teamsteal.simharness import (
    SimSchedule,
    TraceEvent,
    TraceReport,
    check_trace,
    format_trace,
    simulate,
    workload_task_count,
)


def test_workload_task_count():
    assert workload_task_count([]) == 0
    assert workload_task_count([(3, 1)]) == 3
    assert workload_task_count([(2, [1, 2]), (4, 4)]) == 6


def test_empty_workload_terminates_immediately():
    result = simulate([], SimSchedule(mode="random", p=1, count=1))
    assert result.report.ok()
    assert any(ev.kind == "terminate" for ev in result.trace)


@pytest.mark.parametrize("p", [1, 2, 4])
def test_empty_workload_all_p(p):
    result = simulate([], SimSchedule(mode="random", p=p, count=3))
    assert result.report.ok(), result.report.lines()


def test_random_schedules_unit_chain():
    result = simulate([(4, 1)], SimSchedule(mode="random", p=2, count=20))
    assert result.schedules == 20
    assert result.report.ok(), result.report.lines()
    execs = [ev for ev in result.trace if ev.kind == "execStart"]
    assert len(execs) == 5   # root plus the chain of 4


def test_random_schedules_team_chain():
    result = simulate([(2, [2, 4]), (2, 1)],
                      SimSchedule(mode="random", p=4, count=20))
    assert result.report.ok(), result.report.lines()
    # the r=4 task must appear on all four threads
    by_task = {}
    for ev in result.trace:
        if ev.kind == "execStart":
            by_task.setdefault(ev.payload["task"], []).append(
                (ev.thread, ev.payload["local"]))
    teams = [v for v in by_task.values() if len(v) == 4]
    assert teams, f"no 4-thread execution in {by_task}"
    locals_seen = sorted(l for _, l in teams[0])
    assert locals_seen == [0, 1, 2, 3]


def test_random_schedule_p8_mixed():
    result = simulate([(3, [1, 2, 8]), (2, 4)],
                      SimSchedule(mode="random", p=8, count=5, seed=11))
    assert result.report.ok(), result.report.lines()


def test_exhaustive_single_team_task():
    # one r=2 task at p=2: every interleaving ends with both threads
    # having executed it exactly once
    result = simulate([(1, 2)], SimSchedule(mode="exhaustive", p=2))
    assert result.report.ok(), result.report.lines()
    assert result.states > 10
    assert result.terminals > 0
    execs = [(ev.thread, ev.payload["local"], ev.payload["task"])
             for ev in result.trace if ev.kind == "execStart"
             if ev.payload["team"] == 2]
    assert sorted(t for t, _, _ in execs) == [0, 1]
    assert sorted(l for _, l, _ in execs) == [0, 1]


def test_exhaustive_unit_chain():
    result = simulate([(2, 1)], SimSchedule(mode="exhaustive", p=2))
    assert result.report.ok(), result.report.lines()
    assert result.terminals > 0


def test_exhaustive_guard():
    with pytest.raises(ConfigurationError):
        simulate([(1, 1)], SimSchedule(mode="exhaustive", p=8))
    with pytest.raises(ConfigurationError):
        simulate([(9, 1)], SimSchedule(mode="exhaustive", p=2))


def test_unknown_mode():
    with pytest.raises(ConfigurationError):
        simulate([], SimSchedule(mode="fuzzy"))


# ----------------------------------------------------------------------
# validator behaviour on hand-built traces

def ev(step, thread, kind, **payload):
    return TraceEvent(step, thread, kind, payload)


def valid_trace():
    return [
        ev(0, 0, "push", task=(1,), req=1, level=0),
        ev(1, 0, "popBottom", task=(1,), level=0),
        ev(2, 0, "execStart", task=(1,), team=1, local=0, serial=None),
        ev(3, 0, "execEnd", task=(1,)),
        ev(4, 0, "terminate"),
    ]


def test_check_trace_accepts_valid():
    report = check_trace(valid_trace())
    assert report.ok(), report.lines()
    assert report.checked_events == 5


def test_check_trace_flags_missing_termination():
    report = check_trace(valid_trace()[:-1])
    assert not report.ok("progress")
    assert report.ok("queue_order")


def test_check_trace_flags_duplicate_execution():
    trace = valid_trace()
    trace.insert(3, ev(3, 0, "execStart", task=(1,), team=1, local=0,
                       serial=None))
    report = check_trace(trace)
    assert not report.ok("exactly_once"), report.lines()


def test_check_trace_flags_unexecuted_task():
    trace = [
        ev(0, 0, "push", task=(1,), req=1, level=0),
        ev(1, 0, "terminate"),
    ]
    report = check_trace(trace)
    assert not report.ok("progress")


def test_check_trace_flags_queue_inversion():
    # t2 pushed below t1 at the same level, but stolen first
    trace = [
        ev(0, 0, "push", task=(1,), req=1, level=0),
        ev(1, 0, "push", task=(2,), req=1, level=0),
        ev(2, 1, "steal", victim=0, level=0, taken=[(2,)],
           placed=[], last=(2,)),
    ]
    report = check_trace(trace)
    assert not report.ok("queue_order"), report.lines()


def test_check_trace_flags_wrong_pop():
    trace = [
        ev(0, 0, "push", task=(1,), req=1, level=0),
        ev(1, 0, "push", task=(2,), req=1, level=0),
        ev(2, 0, "popBottom", task=(1,), level=0),
    ]
    report = check_trace(trace)
    assert not report.ok("queue_order")


def test_check_trace_flags_bad_conflict_winner():
    trace = [ev(0, 2, "conflict", winner=2, winner_r=4, loser=1, loser_r=2)]
    report = check_trace(trace)
    assert not report.ok("conflicts")


def test_check_trace_accepts_conflict_tiebreak():
    trace = [ev(0, 1, "conflict", winner=1, winner_r=2, loser=3, loser_r=2)]
    assert check_trace(trace).ok("conflicts")


def test_check_trace_flags_non_consecutive_team():
    word = RegistrationWord(2, 2, 2, 1)
    trace = [ev(0, 0, "fixTeam", word=word, members=[0, 2])]
    report = check_trace(trace)
    assert not report.ok("consecutive")


def test_check_trace_flags_wrong_team_size():
    word = RegistrationWord(2, 2, 2, 1)
    trace = [ev(0, 0, "fixTeam", word=word, members=[0, 1, 2])]
    assert not check_trace(trace).ok("consecutive")


def test_report_lines_shape():
    report = TraceReport()
    lines = report.lines()
    assert len(lines) == 5
    assert all(ln.endswith(": pass") for ln in lines)


def test_format_trace():
    text = format_trace(valid_trace())
    lines = text.splitlines()
    assert len(lines) == 5
    assert "push" in lines[0] and "task=(1,)" in lines[0]
    assert lines[-1].endswith("terminate")
