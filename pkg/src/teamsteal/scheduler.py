"""Work-stealing runtime with deterministic team-building.

Every worker is an explicit state machine whose ``step`` method performs
one protocol action (one compare-and-exchange attempt, one deque
operation, or one task execution).  In the threaded runtime each worker
thread simply drives its own machine in a loop; the simulation harness
drives all machines single-threadedly under a controlled schedule.  The
protocol logic is therefore written exactly once.

Protocol summary per worker:

  * solo with work: coordinate the bottom task of the active queue
    level; r=1 tasks run with no registration-word traffic at all.
  * solo without work: sweep the partner hierarchy level by level,
    either registering for a partner's coordinator that needs this
    thread, or stealing from the partner's queues (largest allowed
    tasks first, last stolen task executed directly).
  * registered at a coordinator: run its published task when ready,
    otherwise poll partners to resolve team conflicts deterministically
    (smaller requirement wins, ties by smaller id).
  * teamed (locked into a fixed team): only poll the coordinator.

Termination: workers register idle after repeatedly failing to steal;
the run ends when all are idle, every queue is empty and no task is in
flight.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field

from . import regword
from .errors import (
    ConfigurationError,
    InfeasibleRequirementError,
    SpawnMisuseError,
)
from .regword import AtomicWord, pack, unpack
from .taskqueue import QueueSet, popappend
from .topology import Topology

# step() outcomes
EV_NOTHING = 0    # took a protocol step, nothing externally visible
EV_PROGRESS = 1   # productive action (resets backoff)
EV_BACKOFF = 2    # unproductive; live driver sleeps

# worker phases
PH_MAIN = 0
PH_STEAL_OBS = 1
PH_STEAL_ACT = 2
PH_POLL = 3
PH_SWITCH = 4
PH_COORD_ACT = 5


def _env(name, cast, default):
    raw = os.environ.get(name)
    if raw is None:
        return default
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {name}: {raw!r}") from exc


def _parse_levels(raw):
    return [int(x) for x in raw.split(",")]


@dataclass
class SchedulerConfig:
    p: int = 4
    level_sizes: list | None = None
    randomized: bool = False
    seed: int = 0
    max_steal: int = 8
    backoff_min: float = 1e-6   # 1 microsecond
    backoff_max: float = 1e-2   # 10 milliseconds
    idle_threshold: int = 3     # failed full sweeps before registering idle
    instrument: bool = False    # record execution log / registration sets
    split_steps: bool = False   # make word reads and their CAS separate steps

    @classmethod
    def from_env(cls, **overrides):
        cfg = cls(**overrides)
        cfg.p = _env("TEAMSTEAL_THREADS", int, cfg.p)
        cfg.level_sizes = _env("TEAMSTEAL_LEVELS", _parse_levels, cfg.level_sizes)
        cfg.randomized = bool(_env("TEAMSTEAL_RANDOMIZED", int, int(cfg.randomized)))
        cfg.seed = _env("TEAMSTEAL_SEED", int, cfg.seed)
        cfg.max_steal = _env("TEAMSTEAL_MAX_STEAL", int, cfg.max_steal)
        cfg.backoff_min = _env("TEAMSTEAL_BACKOFF_MIN", float, cfg.backoff_min)
        cfg.backoff_max = _env("TEAMSTEAL_BACKOFF_MAX", float, cfg.backoff_max)
        cfg.idle_threshold = _env("TEAMSTEAL_IDLE_THRESHOLD", int, cfg.idle_threshold)
        return cfg


class AtomicCounter:
    __slots__ = ("value", "_lock")

    def __init__(self, value=0):
        self.value = value
        self._lock = threading.Lock()

    def add(self, delta):
        with self._lock:
            self.value += delta
            return self.value


class Backoff:
    """Exponential backoff delay, doubling from 1us up to 10ms."""

    __slots__ = ("lo", "hi", "cur")

    def __init__(self, lo, hi):
        self.lo = lo
        self.hi = hi
        self.cur = lo

    def next_delay(self):
        d = self.cur
        self.cur = min(self.cur * 2, self.hi)
        return d

    def reset(self):
        self.cur = self.lo


class Task:
    """One unit of work with a fixed thread requirement.

    A task is complete once its body has returned on every team thread
    and all tasks it spawned have completed (transitively, since a
    child signals only on its own completion).
    """

    __slots__ = ("tid", "body", "req", "parent", "body_remaining",
                 "children_open", "spawned", "completed", "_lock")

    def __init__(self, tid, body, req, parent):
        self.tid = tid
        self.body = body
        self.req = req
        self.parent = parent
        self.body_remaining = req
        self.children_open = 0
        self.spawned = 0
        self.completed = False
        self._lock = threading.Lock()

    def child_spawned(self):
        with self._lock:
            self.children_open += 1

    def _maybe_complete(self, rt):
        if self.body_remaining == 0 and self.children_open == 0 and not self.completed:
            self.completed = True
            return True
        return False

    def body_finished(self, rt):
        with self._lock:
            self.body_remaining -= 1
            done = self._maybe_complete(rt)
        if done:
            self._signal(rt)

    def child_completed(self, rt):
        with self._lock:
            self.children_open -= 1
            done = self._maybe_complete(rt)
        if done:
            self._signal(rt)

    def _signal(self, rt):
        rt.outstanding.add(-1)
        if self.parent is not None:
            self.parent.child_completed(rt)


class TaskSlot:
    """A ready team task published by its coordinator.

    ``g`` counts team members that have not yet started; the
    coordinator clears the slot only once it reaches zero.
    """

    __slots__ = ("serial", "task", "coord", "team_size", "window", "g",
                 "shared", "barrier")

    def __init__(self, serial, task, coord, team_size, window, live):
        self.serial = serial
        self.task = task
        self.coord = coord
        self.team_size = team_size
        self.window = window
        self.g = AtomicCounter(team_size - 1)
        self.shared = {}
        self.barrier = threading.Barrier(team_size) if live else None


class ExecutionContext:
    """Handed to every task body; carries team identity and spawn/sync."""

    __slots__ = ("worker", "task", "team_size", "local_id", "slot")

    def __init__(self, worker, task, team_size, local_id, slot):
        self.worker = worker
        self.task = task
        self.team_size = team_size
        self.local_id = local_id
        self.slot = slot

    @property
    def coordinator_id(self):
        return self.slot.coord if self.slot is not None else self.worker.I

    @property
    def shared(self):
        return self.slot.shared if self.slot is not None else None

    def barrier_wait(self):
        if self.slot is not None and self.slot.barrier is not None:
            self.slot.barrier.wait()

    def spawn(self, body, r: int = 1) -> Task:
        """Create a child task and enqueue it on this worker.

        Within a team only local id 0 may spawn; the registration word
        of the executing worker is updated so partners can start
        forming the team for the new requirement.
        """
        if self.team_size > 1 and self.local_id != 0:
            raise SpawnMisuseError(
                f"spawn from team member with local id {self.local_id}"
            )
        rt = self.worker.rt
        if r < 1 or r > rt.cfg.p:
            raise InfeasibleRequirementError(f"requirement {r} not in [1, {rt.cfg.p}]")
        child = rt.new_task(body, r, parent=self.task)
        self.task.child_spawned()
        rt.outstanding.add(1)
        w = self.worker
        w.Q.push_bottom(child)
        rt.trace("push", w.I, task=child.tid, req=r, level=w.Q.level_for(r))
        while True:
            cur = unpack(w.R.load())
            nxt = regword.on_spawn_requirement(cur, r, rt.cfg.p)
            if nxt == cur or w.R.compare_exchange(pack(*cur), pack(*nxt)):
                if rt.cfg.instrument and nxt.n != cur.n:
                    # epoch bump flushed all non-teamed registrants
                    if nxt.t <= 1:
                        w.registered_ids.clear()
                    else:
                        lo, hi = rt.topo.team_window(w.I, nxt.t)
                        w.registered_ids = {
                            i for i in w.registered_ids if lo <= i <= hi}
                break
        return child

    def sync(self) -> None:
        """Wait for all direct children (hence all descendants) of this task."""
        task = self.task
        self.worker.help_while(lambda: task.children_open > 0)


class Worker:
    """One hardware-thread state machine."""

    __slots__ = (
        "rt", "I", "Q", "R", "c_idx", "cN", "silent", "last_serial",
        "slot", "idle", "fails", "phase", "lvl", "obs", "poll_c",
        "poll_r", "switch_target", "backoff", "rng", "registered_ids",
    )

    def __init__(self, rt, i):
        self.rt = rt
        self.I = i
        self.Q = QueueSet(rt.topo, i)
        self.R = AtomicWord(pack(1, 1, 1, 0), counter=rt.count_reg_cas)
        self.c_idx = i
        self.cN = 0
        self.silent = False
        self.last_serial = -1
        self.slot = None
        self.idle = False
        self.fails = 0
        self.phase = PH_MAIN
        self.lvl = 0
        self.obs = None
        self.poll_c = 0
        self.poll_r = 0
        self.switch_target = 0
        self.backoff = Backoff(rt.cfg.backoff_min, rt.cfg.backoff_max)
        self.rng = rt.topo.make_rng(i) if rt.cfg.randomized else None
        self.registered_ids = set()   # instrumentation only

    # ------------------------------------------------------------------

    def step(self):
        ph = self.phase
        if ph == PH_MAIN:
            return self._step_main()
        if ph == PH_STEAL_OBS:
            return self._step_steal_obs()
        if ph == PH_STEAL_ACT:
            return self._step_steal_act()
        if ph == PH_POLL:
            return self._step_poll()
        if ph == PH_SWITCH:
            return self._step_switch()
        if ph == PH_COORD_ACT:
            return self._step_coord_act()
        raise AssertionError(f"unknown phase {ph}")

    # -- main dispatch --------------------------------------------------

    def _step_main(self):
        rt = self.rt
        slot = self.slot
        if slot is not None:
            # a previously published task must be started by the whole
            # team before the slot can be reused
            if slot.g.value > 0:
                return EV_BACKOFF
            self.slot = None
            rt.trace("clearslot", self.I, serial=slot.serial)
            return EV_PROGRESS
        if self.c_idx != self.I:
            return self._step_member()
        reg = unpack(self.R.load())
        if self.Q.is_empty():
            if reg.t > 1 or reg.r > 1 or reg.a > 1:
                # queue ran empty: disband the team / flush registrants
                desired = regword.reset_to_solo(reg)
                if self.R.compare_exchange(pack(*reg), pack(*desired)):
                    rt.trace("reset", self.I, word=desired)
                    if rt.cfg.instrument:
                        self.registered_ids.clear()
                return EV_PROGRESS
            if self.idle:
                return self._step_idle()
            self.phase = PH_STEAL_OBS
            self.lvl = 0
            self.obs = None
            return self._step_steal_obs()
        if self.idle:
            self._leave_idle()
            return EV_PROGRESS
        return self._step_coord_obs(reg)

    # -- member behaviour ----------------------------------------------

    def _step_member(self):
        rt = self.rt
        c = rt.workers[self.c_idx]
        creg = unpack(c.R.load())
        slot = c.slot
        if slot is not None and slot.serial != self.last_serial:
            lo, hi = slot.window
            if lo <= self.I <= hi:
                slot.g.add(-1)
                self.last_serial = slot.serial
                self.silent = False
                self._run_task(slot.task, slot.team_size, self.I - lo, slot)
                return EV_PROGRESS
            # inside the rounded-up block but not part of the actual
            # team: released as soon as execution starts (silent case)
            self.c_idx = self.I
            self.silent = False
            rt.trace("release", self.I, coord=c.I)
            return EV_PROGRESS
        if self.silent:
            if creg.n != self.cN:
                self.c_idx = self.I
                self.silent = False
                return EV_PROGRESS
            if creg.r > 1 and creg.a < creg.r and rt.topo.in_window(c.I, self.I, creg.r):
                # requirement grew to include this thread: upgrade to a
                # counted registration
                desired = regword.try_acquire_delta(creg, +1)
                if c.R.compare_exchange(pack(*creg), pack(*desired)):
                    self.silent = False
                    self.cN = creg.n
                    rt.trace("register", self.I, coord=c.I, word=desired)
                    if rt.cfg.instrument:
                        c.registered_ids.add(self.I)
                return EV_NOTHING
            return EV_BACKOFF
        teamed = creg.t > 1 and rt.topo.in_window(c.I, self.I, creg.t)
        if teamed:
            # locked into a fixed team: only poll the coordinator
            return EV_BACKOFF
        if creg.n != self.cN:
            # registration revoked (epoch bumped); start over solo
            self.c_idx = self.I
            rt.trace("revoked", self.I, coord=c.I)
            return EV_PROGRESS
        self.phase = PH_POLL
        self.poll_c = self.c_idx
        self.poll_r = creg.r
        self.lvl = 0
        return EV_NOTHING

    # -- coordination ---------------------------------------------------

    def _working_level(self, reg):
        if reg.t > 1:
            lvl = self.Q.level_for(reg.t)
            if len(self.Q.levels[lvl]) > 0:
                return lvl
        return self.Q.lowest_nonempty()

    def _step_coord_obs(self, reg):
        lvl = self._working_level(reg)
        if lvl is None:
            return EV_NOTHING
        bottom = self.Q.levels[lvl].peek_bottom()
        if bottom is None:
            return EV_NOTHING
        if bottom.req == 1 and reg.t == 1:
            # degenerate work-stealing path: no registration-word
            # traffic whatsoever
            task = self.Q.pop_bottom(lvl)
            if task is None:
                return EV_NOTHING
            self.rt.trace("popBottom", self.I, task=task.tid, level=lvl)
            self._run_task(task, 1, 0, None)
            return EV_PROGRESS
        self.obs = (pack(*reg), lvl, bottom.req)
        self.phase = PH_COORD_ACT
        if self.rt.cfg.split_steps:
            return EV_NOTHING
        return self._step_coord_act()

    def _step_coord_act(self):
        rt = self.rt
        expected, lvl, rreq = self.obs
        self.obs = None
        self.phase = PH_MAIN
        reg = unpack(expected)
        bottom = self.Q.levels[lvl].peek_bottom()
        if bottom is None or bottom.req != rreq:
            return EV_NOTHING
        if reg.t > 1 and rreq != reg.t:
            if rreq < reg.t:
                # shrink the team deterministically; outsiders detect
                # the epoch bump, insiders stay via the window test
                desired = regword.RegistrationWord(
                    rreq, rreq, rreq, (reg.n + 1) % regword.EPOCH_MOD)
                rt.team_cas += 1
                if self.R.compare_exchange(expected, pack(*desired)):
                    rt.trace("shrink", self.I, word=desired)
                    if rt.cfg.instrument:
                        lo, hi = rt.topo.team_window(self.I, rreq)
                        self.registered_ids = {
                            i for i in self.registered_ids if lo <= i <= hi}
                return EV_NOTHING
            # next task is larger: break the team up and rebuild
            desired = regword.RegistrationWord(
                rreq, 1, 1, (reg.n + 1) % regword.EPOCH_MOD)
            rt.team_cas += 1
            if self.R.compare_exchange(expected, pack(*desired)):
                rt.trace("disband", self.I, word=desired)
                if rt.cfg.instrument:
                    self.registered_ids.clear()
            return EV_NOTHING
        if reg.r != rreq:
            # advertise the task actually being coordinated
            desired = regword.on_spawn_requirement(reg, rreq, rt.cfg.p)
            if desired != reg and self.R.compare_exchange(expected, pack(*desired)):
                if rt.cfg.instrument and desired.n != reg.n:
                    # epoch bump flushed all non-teamed registrants
                    if desired.t <= 1:
                        self.registered_ids.clear()
                    else:
                        lo, hi = rt.topo.team_window(self.I, desired.t)
                        self.registered_ids = {
                            i for i in self.registered_ids if lo <= i <= hi}
            return EV_NOTHING
        if reg.a < reg.r:
            self.phase = PH_POLL
            self.poll_c = self.I
            self.poll_r = reg.r
            self.lvl = 0
            return EV_NOTHING
        # a == r: fix the team (skipped when the size is unchanged)
        if reg.t != reg.r:
            desired = regword.fix_team(reg)
            rt.team_cas += 1
            if not self.R.compare_exchange(expected, pack(*desired)):
                return EV_BACKOFF
            reg = desired
            rt.trace("fixTeam", self.I, word=reg,
                     members=tuple(sorted(self.registered_ids | {self.I}))
                     if rt.cfg.instrument else None)
        task = self.Q.pop_bottom(lvl)
        if task is None:
            return EV_NOTHING
        rt.trace("popBottom", self.I, task=task.tid, level=lvl)
        if reg.r == 1:
            self._run_task(task, 1, 0, None)
            return EV_PROGRESS
        window = rt.topo.team_window(self.I, reg.r)
        slot = TaskSlot(rt.next_serial(), task, self.I, reg.r, window, rt.live)
        self.slot = slot
        rt.trace("publish", self.I, serial=slot.serial, task=task.tid,
                 team=reg.r, window=window)
        # advertise the next bottom task (never below the team size)
        nxt = self.Q.levels[lvl].peek_bottom()
        nreq = max(reg.t, nxt.req if nxt is not None else 1)
        if nreq != reg.r:
            self.R.compare_exchange(
                pack(*reg), pack(*reg._replace(r=nreq)))
        self._run_task(task, reg.r, self.I - window[0], slot)
        return EV_PROGRESS

    # -- stealing -------------------------------------------------------

    def _steal_limit(self, level):
        return min(self.rt.topo.nprime[self.I][level], self.rt.cfg.max_steal)

    def _step_steal_obs(self):
        rt = self.rt
        x_id = None
        while self.lvl < rt.topo.L:
            x_id = rt.topo.partner(self.I, self.lvl, self.rng)
            if x_id is not None:
                break
            self.lvl += 1
        if self.lvl >= rt.topo.L:
            return self._sweep_failed()
        x = rt.workers[x_id]
        xc_idx = x.c_idx
        self.obs = (x_id, xc_idx, rt.workers[xc_idx].R.load())
        self.phase = PH_STEAL_ACT
        if rt.cfg.split_steps:
            return EV_NOTHING
        return self._step_steal_act()

    def _step_steal_act(self):
        rt = self.rt
        x_id, xc_idx, xcw = self.obs
        self.obs = None
        self.phase = PH_STEAL_OBS
        xcreg = unpack(xcw)
        xc = rt.workers[xc_idx]
        if (xc_idx != self.I and xcreg.r > 1
                and rt.topo.overlap(xc_idx, self.I, xcreg.r)):
            # the partner's coordinator requires this thread
            if rt.topo.in_window(xc_idx, self.I, xcreg.r):
                if xcreg.a < xcreg.r:
                    desired = regword.try_acquire_delta(xcreg, +1)
                    if xc.R.compare_exchange(xcw, pack(*desired)):
                        self.c_idx = xc_idx
                        self.cN = xcreg.n
                        self.silent = False
                        self.fails = 0
                        self.phase = PH_MAIN
                        rt.trace("register", self.I, coord=xc_idx, word=desired)
                        if rt.cfg.instrument:
                            xc.registered_ids.add(self.I)
                        return EV_PROGRESS
                    return EV_NOTHING  # re-observe the same level
            else:
                # inside the rounded-up block but not needed: register
                # silently so the team can still form around us
                self.c_idx = xc_idx
                self.cN = xcreg.n
                self.silent = True
                self.fails = 0
                self.phase = PH_MAIN
                rt.trace("silent", self.I, coord=xc_idx)
                return EV_PROGRESS
        # steal from the partner instead, largest allowed tasks first
        x = rt.workers[x_id]
        vlevel = x.Q.highest_nonempty_at_most(self.lvl)
        if vlevel is not None:
            vq = x.Q.levels[vlevel]
            count = min((vq.size() + 1) // 2, self._steal_limit(self.lvl))
            transferred, last = popappend(self.Q, vq, count)
            if last is not None:
                self.fails = 0
                self.phase = PH_MAIN
                taken = [t.tid for t in transferred] + [last.tid]
                placed = [(t.tid, self.Q.level_for(t.req)) for t in transferred]
                run_now = last.req == 1
                if not run_now:
                    placed.append((last.tid, self.Q.level_for(last.req)))
                rt.trace("steal", self.I, victim=x_id, level=vlevel,
                         taken=taken, placed=placed, last=last.tid)
                if run_now:
                    self._run_task(last, 1, 0, None)
                else:
                    self.Q.push_bottom(last)
                return EV_PROGRESS
        self.lvl += 1
        if self.lvl >= rt.topo.L:
            return self._sweep_failed()
        return EV_NOTHING

    def _sweep_failed(self):
        self.phase = PH_MAIN
        self.lvl = 0
        self.fails += 1
        if self.fails >= self.rt.cfg.idle_threshold and not self.idle:
            self.idle = True
            self.rt.idle_count.add(1)
            self.rt.trace("idle", self.I)
        return EV_BACKOFF

    def _leave_idle(self):
        self.idle = False
        self.fails = 0
        self.rt.idle_count.add(-1)
        self.rt.trace("busy", self.I)

    def _step_idle(self):
        rt = self.rt
        if rt.outstanding.value > 0 and any(
                not w.Q.is_empty() for w in rt.workers):
            self._leave_idle()
            return EV_PROGRESS
        if rt.idle_count.value == rt.cfg.p:
            # confirmation pass: every queue empty and nothing in flight
            if rt.outstanding.value == 0 and all(
                    w.Q.is_empty() for w in rt.workers):
                rt.terminated = True
                rt.trace("terminate", self.I)
                return EV_PROGRESS
            if rt.outstanding.value > 0 and all(
                    w.Q.is_empty() for w in rt.workers):
                # tasks in flight but none queued: keep polling
                return EV_BACKOFF
        return EV_BACKOFF

    # -- partner polling (team conflict resolution) ---------------------

    def _step_poll(self):
        rt = self.rt
        topo = rt.topo
        x_id = None
        while (self.lvl < topo.L
               and topo.nprime[self.I][self.lvl] < self.poll_r):
            x_id = topo.partner(self.I, self.lvl, self.rng)
            if x_id is not None:
                break
            self.lvl += 1
        else:
            self.phase = PH_MAIN
            return EV_BACKOFF
        x = rt.workers[x_id]
        xc_idx = x.c_idx
        if xc_idx == self.poll_c or xc_idx == self.I:
            self.lvl += 1
            return EV_NOTHING
        xcreg = unpack(rt.workers[xc_idx].R.load())
        if xcreg.r == self.poll_r and xc_idx < self.poll_c:
            rt.trace("conflict", self.I, loser=self.poll_c,
                     loser_r=self.poll_r, winner=xc_idx, winner_r=xcreg.r)
            self.switch_target = xc_idx
            self.phase = PH_SWITCH
            return EV_NOTHING
        if 1 <= xcreg.r < self.poll_r:
            if not topo.overlap(xc_idx, self.I, xcreg.r):
                # the smaller task does not need this thread: help drain
                # the partner's queues so it finishes sooner
                vlevel = x.Q.highest_nonempty_at_most(self.lvl)
                if vlevel is not None:
                    vq = x.Q.levels[vlevel]
                    count = min((vq.size() + 1) // 2, self._steal_limit(self.lvl))
                    transferred, last = popappend(self.Q, vq, count)
                    if last is not None:
                        self.Q.push_bottom(last)
                        taken = [t.tid for t in transferred] + [last.tid]
                        placed = [(t.tid, self.Q.level_for(t.req))
                                  for t in transferred]
                        placed.append((last.tid, self.Q.level_for(last.req)))
                        rt.trace("steal", self.I, victim=x_id, level=vlevel,
                                 taken=taken, placed=placed, last=last.tid)
                        self.phase = PH_MAIN
                        return EV_PROGRESS
            elif xcreg.r > 1:
                # the smaller task wins and needs this thread
                rt.trace("conflict", self.I, loser=self.poll_c,
                         loser_r=self.poll_r, winner=xc_idx, winner_r=xcreg.r)
                self.switch_target = xc_idx
                self.phase = PH_SWITCH
                return EV_NOTHING
        self.lvl += 1
        return EV_NOTHING

    # -- coordinator switching ------------------------------------------

    def _step_switch(self):
        rt = self.rt
        xc_idx = self.switch_target
        xc = rt.workers[xc_idx]
        xcreg = unpack(xc.R.load())
        if not (xcreg.r > 1 and rt.topo.overlap(xc_idx, self.I, xcreg.r)):
            self.phase = PH_MAIN
            return EV_NOTHING
        if self.c_idx != self.I:
            c = rt.workers[self.c_idx]
            creg = unpack(c.R.load())
            if creg.t > 1 and rt.topo.in_window(self.c_idx, self.I, creg.t):
                # locked into the current team: cannot drop out
                self.phase = PH_MAIN
                return EV_NOTHING
            if self.silent or creg.n != self.cN or creg.a <= creg.t:
                # registration already flushed; just detach
                self.c_idx = self.I
                self.silent = False
                return EV_NOTHING
            desired = regword.try_acquire_delta(creg, -1)
            if c.R.compare_exchange(pack(*creg), pack(*desired)):
                rt.trace("deregister", self.I, coord=self.c_idx, word=desired)
                if rt.cfg.instrument:
                    c.registered_ids.discard(self.I)
                self.c_idx = self.I
                return EV_PROGRESS
            return EV_BACKOFF
        if rt.topo.in_window(xc_idx, self.I, xcreg.r):
            if xcreg.a >= xcreg.r:
                self.phase = PH_MAIN
                return EV_NOTHING
            desired = regword.try_acquire_delta(xcreg, +1)
            if xc.R.compare_exchange(pack(*xcreg), pack(*desired)):
                rt.trace("register", self.I, coord=xc_idx, word=desired)
                if rt.cfg.instrument:
                    xc.registered_ids.add(self.I)
                # stop coordinating any own task
                while True:
                    own = unpack(self.R.load())
                    if own.r <= 1:
                        break
                    if self.R.compare_exchange(
                            pack(*own), pack(*regword.reset_to_solo(own))):
                        rt.trace("reset", self.I,
                                 word=regword.reset_to_solo(own))
                        if rt.cfg.instrument:
                            self.registered_ids.clear()
                        break
                self.c_idx = xc_idx
                self.cN = xcreg.n
                self.silent = False
                self.phase = PH_MAIN
                return EV_PROGRESS
            return EV_BACKOFF
        self.c_idx = xc_idx
        self.cN = xcreg.n
        self.silent = True
        self.phase = PH_MAIN
        rt.trace("silent", self.I, coord=xc_idx)
        return EV_PROGRESS

    # -- execution ------------------------------------------------------

    def _run_task(self, task, team_size, local_id, slot):
        rt = self.rt
        rt.trace("execStart", self.I, task=task.tid, team=team_size,
                 local=local_id, serial=slot.serial if slot else None)
        if rt.cfg.instrument:
            with rt._log_lock:
                rt.exec_log.append(
                    (task.tid, self.I, local_id, team_size,
                     slot.serial if slot else None))
        ctx = ExecutionContext(self, task, team_size, local_id, slot)
        try:
            task.body(ctx)
        except Exception as exc:   # noqa: BLE001 - first failure wins
            rt.record_error(exc)
        finally:
            rt.trace("execEnd", self.I, task=task.tid)
            task.body_finished(rt)
        self.backoff.reset()

    def help_while(self, cond):
        """Run the scheduler loop on this worker while ``cond()`` holds.

        Used by sync: the waiting worker keeps executing tasks instead
        of blocking.  Control state is saved and restored so the outer
        protocol context survives; we only stop at a protocol-neutral
        point (main phase, nothing observed).
        """
        saved = (self.phase, self.lvl, self.obs, self.poll_c, self.poll_r,
                 self.switch_target)
        self.phase = PH_MAIN
        self.obs = None
        rt = self.rt
        while cond() or self.phase != PH_MAIN:
            ev = self.step()
            if ev == EV_BACKOFF and rt.live:
                time.sleep(self.backoff.next_delay())
            elif ev == EV_PROGRESS:
                self.backoff.reset()
        (self.phase, self.lvl, self.obs, self.poll_c, self.poll_r,
         self.switch_target) = saved


class Runtime:
    """Shared state of one scheduler instance."""

    def __init__(self, cfg: SchedulerConfig, live: bool = True, tracer=None):
        self.cfg = cfg
        self.live = live
        self.tracer = tracer
        self.topo = Topology(cfg.p, cfg.level_sizes, cfg.randomized, cfg.seed)
        self.outstanding = AtomicCounter()
        self.idle_count = AtomicCounter()
        self.terminated = False
        self.error = None
        self.reg_cas = 0
        self.team_cas = 0
        self._serial = 0
        self._serial_lock = threading.Lock()
        self._task_id = 0
        self.tasks = {}            # populated only when tracking (sim)
        self.live_tids = set()     # tasks existing in the current sim state
        self.track_tasks = not live
        self.exec_log = []
        self._log_lock = threading.Lock()
        self.workers = [Worker(self, i) for i in range(cfg.p)]

    def count_reg_cas(self):
        self.reg_cas += 1

    def next_serial(self):
        with self._serial_lock:
            self._serial += 1
            return self._serial

    def new_task(self, body, req, parent):
        # ids name the task's position in the spawn tree, so they are
        # the same under every schedule
        if parent is None:
            with self._serial_lock:
                self._task_id += 1
                tid = (self._task_id,)
        else:
            with parent._lock:
                parent.spawned += 1
                tid = parent.tid + (parent.spawned,)
        task = Task(tid, body, req, parent)
        if self.track_tasks:
            self.tasks[tid] = task
            self.live_tids.add(tid)
        return task

    def trace(self, kind, thread, **payload):
        if self.tracer is not None:
            self.tracer(kind, thread, payload)

    def record_error(self, exc):
        if self.error is None:
            self.error = exc

    def seed_root(self, body, req):
        root = self.new_task(body, req, parent=None)
        self.outstanding.add(1)
        w0 = self.workers[0]
        w0.Q.push_bottom(root)
        if req > 1:
            w0.R.store(pack(req, 1, 1, 0))
        self.trace("push", 0, task=root.tid, req=req, level=w0.Q.level_for(req))
        return root


def _drive(rt, worker):
    while not rt.terminated:
        ev = worker.step()
        if ev == EV_BACKOFF:
            time.sleep(worker.backoff.next_delay())
        elif ev == EV_PROGRESS:
            worker.backoff.reset()


def run(body, r: int = 1, config: SchedulerConfig | None = None,
        tracer=None) -> Runtime:
    """Execute a root task (and everything it spawns) to completion.

    Starts p worker threads, seeds the root into worker 0's queue set
    and joins once idle-based termination fires.  The Runtime is
    returned so callers can inspect instrumentation counters.
    """
    cfg = config or SchedulerConfig()
    if r < 1 or r > cfg.p:
        raise InfeasibleRequirementError(f"root requirement {r} not in [1, {cfg.p}]")
    rt = Runtime(cfg, live=True, tracer=tracer)
    rt.seed_root(body, r)
    threads = [
        threading.Thread(target=_drive, args=(rt, w), name=f"teamsteal-{w.I}")
        for w in rt.workers
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if rt.error is not None:
        raise rt.error
    return rt
