"""Deterministic single-threaded exploration of the scheduler protocol.

The very same Worker state machines used by the threaded runtime are
driven here one step at a time under a controlled interleaving, so
whatever the harness proves about the protocol applies to the runtime
logic directly.  Two modes:

  * random: seeded fair schedules; every event is fed through an online
    validator that checks all scheduler invariants as the run unfolds.
  * exhaustive: depth-first enumeration of every distinct interleaving
    via state snapshot/restore with memoization.  No-op steps self-loop
    and are pruned, so the walk visits each reachable protocol state
    once; livelock cycles bump the registration epoch and eventually
    exhaust the step budget instead of looping forever.

Invariants checked (naming follows the report keys):

  progress        every spawned task is executed, runs terminate
  queue_order     no same-level queue reordering (model-deque replay)
  conflicts       team conflicts resolved by smaller r, ties smaller id
  exactly_once    each team member runs a task exactly once
  consecutive     every fixed team is a consecutive id range
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import (
    ConfigurationError,
    LivelockSuspectError,
    ProtocolViolationError,
)
from .scheduler import Runtime, SchedulerConfig, TaskSlot


class TraceEvent(NamedTuple):
    step: int
    thread: int
    kind: str
    payload: dict


@dataclass
class SimSchedule:
    mode: str = "random"          # "random" or "exhaustive"
    seed: int = 0
    count: int = 1                # schedules to run (random mode)
    max_steps: int = 1_000_000    # per-schedule / total DFS step budget
    p: int = 2
    level_sizes: list | None = None
    # None: split word reads from their CAS for p <= 2 (finest
    # granularity), merge them into one step for larger p
    split_steps: bool | None = None


@dataclass
class SimResult:
    schedules: int
    steps: int
    trace: list
    report: "TraceReport"
    states: int = 0               # exhaustive mode only
    terminals: int = 0


CHECK_NAMES = ("progress", "queue_order", "conflicts", "exactly_once",
               "consecutive")


@dataclass
class TraceReport:
    violations: dict = field(default_factory=dict)   # name -> first event
    checked_events: int = 0

    def ok(self, name=None):
        if name is not None:
            return name not in self.violations
        return not self.violations

    def lines(self):
        out = []
        for name in CHECK_NAMES:
            if name in self.violations:
                ev, msg = self.violations[name]
                at = f" at step {ev.step}" if ev is not None else ""
                out.append(f"{name}: FAIL{at} ({msg})")
            else:
                out.append(f"{name}: pass")
        return out


class TraceValidator:
    """Online invariant checker fed one event at a time.

    In strict mode the first violation raises; otherwise violations are
    recorded in the report and checking continues.
    """

    def __init__(self, strict=True, seed=None):
        self.strict = strict
        self.seed = seed
        self.report = TraceReport()
        self._queues = {}          # (worker, level) -> deque of task ids
        self._pushed = {}          # task id -> requirement
        self._execs = {}           # task id -> {thread: local_id}
        self._team_of = {}         # task id -> team size seen at execStart

    def _flag(self, name, event, msg):
        if name not in self.report.violations:
            self.report.violations[name] = (event, msg)
        if self.strict:
            raise ProtocolViolationError(
                f"{name}: {msg}", event=event, seed=self.seed)

    def _q(self, worker, level):
        return self._queues.setdefault((worker, level), deque())

    def feed(self, event: TraceEvent):
        self.report.checked_events += 1
        kind = event.kind
        pl = event.payload
        if kind == "push":
            self._pushed[pl["task"]] = pl["req"]
            self._q(event.thread, pl["level"]).append(pl["task"])
        elif kind == "popBottom":
            q = self._q(event.thread, pl["level"])
            if not q or q[-1] != pl["task"]:
                self._flag("queue_order", event,
                           f"popBottom of {pl['task']} but queue bottom is "
                           f"{q[-1] if q else 'empty'}")
                if pl["task"] in q:
                    q.remove(pl["task"])
            else:
                q.pop()
        elif kind == "steal":
            q = self._q(pl["victim"], pl["level"])
            for tid in pl["taken"]:
                if not q or q[0] != tid:
                    self._flag("queue_order", event,
                               f"steal of {tid} but queue top is "
                               f"{q[0] if q else 'empty'}")
                    if tid in q:
                        q.remove(tid)
                else:
                    q.popleft()
            for tid, level in pl["placed"]:
                self._q(event.thread, level).append(tid)
        elif kind == "execStart":
            tid = pl["task"]
            execs = self._execs.setdefault(tid, {})
            if event.thread in execs:
                self._flag("exactly_once", event,
                           f"task {tid} executed twice by thread {event.thread}")
            execs[event.thread] = pl["local"]
            self._team_of[tid] = pl["team"]
        elif kind == "conflict":
            wr, lr = pl["winner_r"], pl["loser_r"]
            if not (wr < lr or (wr == lr and pl["winner"] < pl["loser"])):
                self._flag("conflicts", event,
                           f"winner (id {pl['winner']}, r={wr}) does not beat "
                           f"loser (id {pl['loser']}, r={lr})")
        elif kind == "fixTeam":
            members = pl.get("members")
            word = pl["word"]
            if members is not None:
                if len(members) != word.t:
                    self._flag("consecutive", event,
                               f"team of {len(members)} fixed for t={word.t}")
                elif members[-1] - members[0] + 1 != len(members):
                    self._flag("consecutive", event,
                               f"team ids {members} not consecutive")
                elif event.thread not in members:
                    self._flag("consecutive", event,
                               f"coordinator {event.thread} outside team {members}")

    def finish(self, terminated=True):
        if not terminated:
            self._flag("progress", None, "run did not terminate")
        for tid, req in self._pushed.items():
            execs = self._execs.get(tid, {})
            if len(execs) != req:
                self._flag("progress", None,
                           f"task {tid} (r={req}) executed by {len(execs)} "
                           f"threads")
                continue
            locals_seen = sorted(execs.values())
            if locals_seen != list(range(req)):
                self._flag("exactly_once", None,
                           f"task {tid} local ids {locals_seen}")
            threads = sorted(execs)
            if threads[-1] - threads[0] + 1 != req:
                self._flag("consecutive", None,
                           f"task {tid} ran on non-consecutive threads {threads}")
        return self.report

    @property
    def executions(self):
        return self._execs


def check_trace(trace) -> TraceReport:
    """Replay a complete trace through the validator; full report, no raise."""
    v = TraceValidator(strict=False)
    for ev in trace:
        v.feed(ev)
    terminated = any(ev.kind == "terminate" for ev in trace)
    return v.finish(terminated=terminated)


# ----------------------------------------------------------------------
# workload DSL: a list of (depth, r) chains.  Chain (d, r) is d tasks
# requiring r threads each, every task spawning the next; r may also be
# a sequence cycled through by depth.

def _chain_reqs(entry):
    depth, r = entry
    if isinstance(r, int):
        return [r] * depth
    rs = list(r)
    return [rs[i % len(rs)] for i in range(depth)]


def workload_task_count(workload) -> int:
    return sum(len(_chain_reqs(entry)) for entry in workload)


def _chain_body(reqs, idx):
    def body(ctx):
        if ctx.local_id == 0 and idx + 1 < len(reqs):
            ctx.spawn(_chain_body(reqs, idx + 1), reqs[idx + 1])
    return body


def build_root(workload):
    """Root body (r=1) that launches every chain, or None if empty."""
    chains = [_chain_reqs(entry) for entry in workload if _chain_reqs(entry)]
    if not chains:
        return None

    def root(ctx):
        for reqs in chains:
            ctx.spawn(_chain_body(reqs, 0), reqs[0])
    return root


# ----------------------------------------------------------------------
# state snapshot / restore

def capture(rt: Runtime):
    workers = tuple(
        (w.R.load(), w.c_idx, w.cN, w.silent, w.last_serial, w.idle,
         w.fails, w.phase, w.lvl, w.obs, w.poll_c, w.poll_r,
         w.switch_target,
         tuple(tuple(t.tid for t in q._items) for q in w.Q.levels),
         (w.slot.serial, w.slot.task.tid, w.slot.coord, w.slot.team_size,
          w.slot.window, w.slot.g.value) if w.slot is not None else None,
         frozenset(w.registered_ids))
        for w in rt.workers
    )
    tasks = tuple(sorted(
        (t.tid, t.body_remaining, t.children_open, t.spawned, t.completed)
        for t in rt.tasks.values() if t.tid in rt.live_tids
    ))
    execs = tuple(sorted(
        (tid, tuple(sorted(m.items()))) for tid, m in rt.task_execs.items()
    ))
    counters = (rt.outstanding.value, rt.idle_count.value, rt.terminated,
                rt._serial, rt._task_id)
    return (workers, tasks, execs, counters)


def restore(rt: Runtime, snap) -> None:
    workers, tasks, execs, counters = snap
    (rt.outstanding.value, rt.idle_count.value, rt.terminated,
     rt._serial, rt._task_id) = counters
    # tasks created on other branches stay in the registry (same tid
    # always names the same logical task); only these are live now
    rt.live_tids = {t[0] for t in tasks}
    for tid, br, co, spawned, completed in tasks:
        task = rt.tasks[tid]
        task.body_remaining = br
        task.children_open = co
        task.spawned = spawned
        task.completed = completed
    rt.task_execs = {tid: dict(items) for tid, items in execs}
    for w, ws in zip(rt.workers, workers):
        (word, w.c_idx, w.cN, w.silent, w.last_serial, w.idle, w.fails,
         w.phase, w.lvl, w.obs, w.poll_c, w.poll_r, w.switch_target,
         queues, slot, registered) = ws
        w.R.store(word)
        for q, tids in zip(w.Q.levels, queues):
            q._items = deque(rt.tasks[tid] for tid in tids)
        if slot is None:
            w.slot = None
        else:
            serial, tid, coord, team, window, g = slot
            s = TaskSlot(serial, rt.tasks[tid], coord, team, window, live=False)
            s.g.value = g
            w.slot = s
        w.registered_ids = set(registered)


# ----------------------------------------------------------------------

def canonical(snap):
    """Memoization key for a snapshot, quotiented by token renaming.

    Epoch counters and slot serials are fresh-value tokens: the
    protocol only ever compares them for equality (stale-registration
    and stale-slot detection).  Renaming them by order of first
    appearance merges states that differ only in token history, which
    cuts the explored space by orders of magnitude.  The global serial
    counter is excluded for the same reason.
    """
    from .regword import pack, unpack
    from .scheduler import PH_COORD_ACT, PH_STEAL_ACT
    epochs = {}
    serials = {}

    def ren_e(v):
        return epochs.setdefault(v, len(epochs))

    def ren_s(v):
        return serials.setdefault(v, len(serials))

    def ren_word(word):
        reg = unpack(word)
        return pack(reg.r, reg.a, reg.t, ren_e(reg.n))

    workers, tasks, execs, counters = snap
    out = []
    for ws in workers:
        (word, c_idx, cN, silent, last_serial, idle, fails, phase, lvl,
         obs, poll_c, poll_r, switch_target, queues, slot, registered) = ws
        if obs is not None:
            if phase == PH_STEAL_ACT:
                obs = (obs[0], obs[1], ren_word(obs[2]))
            elif phase == PH_COORD_ACT:
                obs = (ren_word(obs[0]), obs[1], obs[2])
        out.append((ren_word(word), c_idx, ren_e(cN), silent,
                    ren_s(last_serial), idle, fails, phase, lvl, obs,
                    poll_c, poll_r, switch_target, queues,
                    None if slot is None else
                    (ren_s(slot[0]),) + slot[1:], registered))
    return (tuple(out), tasks, execs, counters[:3] + (counters[4],))


def _make_runtime(workload, sched, tracer):
    # one failed sweep suffices before idling: keeps the idle logic
    # exercised while shrinking the explored state space
    split = sched.split_steps
    if split is None:
        split = sched.p <= 2
    cfg = SchedulerConfig(p=sched.p, level_sizes=sched.level_sizes,
                          instrument=True, idle_threshold=1,
                          split_steps=split)
    rt = Runtime(cfg, live=False, tracer=tracer)
    rt.task_execs = {}
    root = build_root(workload)
    if root is not None:
        rt.seed_root(root, 1)
    return rt


def _run_random_schedule(workload, sched, seed, keep_trace):
    trace = []
    validator = TraceValidator(strict=True, seed=seed)
    rt_box = []

    def tracer(kind, thread, payload):
        ev = TraceEvent(len(trace), thread, kind, payload)
        trace.append(ev)
        if kind == "execStart":
            rt = rt_box[0]
            rt.task_execs.setdefault(payload["task"], {})[thread] = \
                payload["local"]
        validator.feed(ev)

    rt = _make_runtime(workload, sched, tracer)
    rt_box.append(rt)
    rng = random.Random(seed)
    p = sched.p
    steps = 0
    while not rt.terminated:
        if steps >= sched.max_steps:
            raise LivelockSuspectError(
                f"seed {seed}: {sched.max_steps} steps without termination, "
                f"{rt.outstanding.value} tasks outstanding",
                trace=trace if keep_trace else None)
        rt.workers[rng.randrange(p)].step()
        steps += 1
    if rt.error is not None:
        raise rt.error
    report = validator.finish(terminated=True)
    if report.violations:
        name, (ev, msg) = next(iter(report.violations.items()))
        raise ProtocolViolationError(f"seed {seed}: {name}: {msg}",
                                     event=ev, seed=seed)
    return trace, report, steps


def _terminal_check(rt, seed=None):
    for task in (rt.tasks[tid] for tid in rt.live_tids):
        if not task.completed:
            raise ProtocolViolationError(
                f"terminated with incomplete task {task.tid}", seed=seed)
        execs = rt.task_execs.get(task.tid, {})
        if len(execs) != task.req:
            raise ProtocolViolationError(
                f"task {task.tid} (r={task.req}) executed by "
                f"{len(execs)} threads", seed=seed)
        if sorted(execs.values()) != list(range(task.req)):
            raise ProtocolViolationError(
                f"task {task.tid} local ids {sorted(execs.values())}",
                seed=seed)
    if rt.outstanding.value != 0:
        raise ProtocolViolationError("terminated with outstanding tasks",
                                     seed=seed)


def _run_exhaustive(workload, sched):
    if sched.p > 4 or workload_task_count(workload) > 8:
        raise ConfigurationError(
            "exhaustive mode limited to p <= 4 and workloads of <= 8 tasks")
    violation = []

    def tracer(kind, thread, payload):
        # stateless per-event checks; history lives in the snapshots
        if kind == "execStart":
            execs = rt.task_execs.setdefault(payload["task"], {})
            if thread in execs:
                violation.append(ProtocolViolationError(
                    f"task {payload['task']} executed twice by thread {thread}"))
            execs[thread] = payload["local"]
        elif kind == "conflict":
            wr, lr = payload["winner_r"], payload["loser_r"]
            if not (wr < lr or (wr == lr and payload["winner"] < payload["loser"])):
                violation.append(ProtocolViolationError(
                    f"conflict winner (id {payload['winner']}, r={wr}) does "
                    f"not beat loser (id {payload['loser']}, r={lr})"))

    rt = _make_runtime(workload, sched, tracer)
    init = capture(rt)
    visited = {canonical(init)}
    stack = [init]
    steps = 0
    terminals = 0
    p = sched.p
    while stack:
        snap = stack.pop()
        if snap[3][2]:   # terminated flag
            restore(rt, snap)
            _terminal_check(rt)
            terminals += 1
            continue
        progressed = False
        for wid in range(p):
            restore(rt, snap)
            rt.workers[wid].step()
            if violation:
                raise violation[0]
            if rt.error is not None:
                raise rt.error
            steps += 1
            if steps > sched.max_steps:
                raise LivelockSuspectError(
                    f"exhaustive walk exceeded {sched.max_steps} steps "
                    f"({len(visited)} states explored)")
            nxt = capture(rt)
            if nxt == snap:
                continue   # no-op self loop, pruned
            progressed = True
            key = canonical(nxt)
            if key not in visited:
                visited.add(key)
                stack.append(nxt)
        if not progressed:
            restore(rt, snap)
            raise ProtocolViolationError(
                f"deadlock: no worker can make progress, "
                f"{rt.outstanding.value} tasks outstanding")
    if terminals == 0:
        raise ProtocolViolationError("no terminating schedule found")
    return len(visited), terminals, steps


def simulate(workload, sched: SimSchedule) -> SimResult:
    """Drive the scheduler under the given schedule; raise on violation.

    Random mode runs ``count`` seeded schedules, validating every event
    online; the returned trace is from the last schedule.  Exhaustive
    mode enumerates all distinct interleavings and additionally runs
    one seeded schedule to produce a representative trace.
    """
    if sched.mode == "exhaustive":
        states, terminals, steps = _run_exhaustive(workload, sched)
        trace, report, extra = _run_random_schedule(
            workload, sched, sched.seed, keep_trace=True)
        return SimResult(schedules=1, steps=steps + extra, trace=trace,
                         report=report, states=states, terminals=terminals)
    if sched.mode != "random":
        raise ConfigurationError(f"unknown schedule mode {sched.mode!r}")
    total = 0
    trace = report = None
    for i in range(sched.count):
        seed = sched.seed + i
        keep = i == sched.count - 1
        trace, report, steps = _run_random_schedule(
            workload, sched, seed, keep_trace=keep)
        total += steps
    return SimResult(schedules=sched.count, steps=total, trace=trace or [],
                     report=report or TraceReport())


def format_trace(trace) -> str:
    """One event per line, stable field order."""
    lines = []
    for ev in trace:
        fields = " ".join(f"{k}={v}" for k, v in sorted(ev.payload.items()))
        lines.append(f"{ev.step:6d} t{ev.thread} {ev.kind} {fields}".rstrip())
    return "\n".join(lines)
