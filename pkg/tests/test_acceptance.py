"""End-to-end acceptance checks for the runtime, harness, and sorts.

Each check prints exactly one PASS/FAIL (or SKIP) line on the terminal,
bypassing capture, so a full run reads as a checklist.  The checks are
ordered; the local-id audit (check 5) consumes execution logs collected
by checks 1 and 3 earlier in the same session.
"""

from __future__ import annotations

import os
import time

import numpy as np
import pytest

from teamsteal import qsort, regword, simharness
from teamsteal.bench import Distribution, generate, run_bench
from teamsteal.errors import NotReadyError
from teamsteal.regword import RegistrationWord
from teamsteal.scheduler import SchedulerConfig, run
from teamsteal.simharness import SimSchedule, simulate

# evidence shared between checks in one session
ACC = {"team_execs": []}   # list of (tag, team_size, sorted local ids)


@pytest.fixture
def announce(capsys):
    def _announce(num, ok, detail):
        word = {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
        with capsys.disabled():
            print(f"acceptance {num}: {word} - {detail}")
    return _announce


def _harvest_trace(tag, trace):
    """Collect per-execution team local ids from a sim trace."""
    groups = {}
    for ev in trace:
        if ev.kind == "execStart" and ev.payload["team"] > 1:
            key = (ev.payload["task"], ev.payload["serial"])
            groups.setdefault(key, []).append(ev.payload["local"])
    for (tid, _), locals_ in groups.items():
        ACC["team_execs"].append((f"{tag}:{tid}", len(locals_),
                                  sorted(locals_)))


def _harvest_exec_log(tag, exec_log):
    groups = {}
    for tid, _thread, local, team, serial in exec_log:
        if team > 1:
            groups.setdefault((tid, serial), (team, []))[1].append(local)
    for (tid, _), (team, locals_) in groups.items():
        entry = (f"{tag}:{tid}", team, sorted(locals_))
        ACC["team_execs"].append(entry)
        assert entry[2] == list(range(team)), \
            f"{tag}: task {tid} team {team} ran local ids {entry[2]}"


EXHAUSTIVE_SUITE = [
    (2, [(1, 2)]),
    (2, [(2, 2), (1, 1)]),
    (2, [(3, [1, 2])]),
    (2, [(3, [2, 1])]),
    (2, [(6, [2, 1])]),
    (4, [(1, 4)]),
    (4, [(1, 4), (1, 1)]),
    (4, [(2, 4)]),
]

RANDOM_100 = [(13, [1, 2, 1, 4]), (13, [2, 1, 8, 1]),
              (37, 1), (37, [1, 1, 1, 2])]


def test_acceptance_1_protocol_invariants(announce):
    t0 = time.perf_counter()
    states = 0
    try:
        for p, workload in EXHAUSTIVE_SUITE:
            result = simulate(workload, SimSchedule(mode="exhaustive", p=p))
            assert result.report.ok(), \
                f"p={p} {workload}: {result.report.lines()}"
            assert result.terminals > 0
            states += result.states
            _harvest_trace(f"exh-p{p}", result.trace)
        result = simulate(RANDOM_100,
                          SimSchedule(mode="random", p=8, count=10**4))
        assert result.report.ok(), result.report.lines()
        _harvest_trace("rand-p8", result.trace)
    except Exception as exc:
        announce(1, False, f"protocol invariant suite: {exc}")
        raise
    elapsed = time.perf_counter() - t0
    ok = elapsed < 300
    announce(1, ok, f"protocol invariant suite clean ({states} exhaustive "
                    f"states, 10^4 random schedules, {elapsed:.0f}s)")
    assert ok, f"invariant suite took {elapsed:.0f}s, budget 300s"


def test_acceptance_2_degenerate_zero_cas(announce):
    n = 10**7
    a = generate(Distribution("random", n, seed=2))
    expect_sum = int(a.sum(dtype=np.int64))
    cfg = qsort.SortConfig()
    rt = run(qsort.make_fork_body(a, 0, n - 1, cfg), 1,
             SchedulerConfig(p=4, instrument=True))
    sorted_ok = not np.any(a[1:] < a[:-1])
    sum_ok = int(a.sum(dtype=np.int64)) == expect_sum
    ok = sorted_ok and sum_ok and rt.reg_cas == 0 and rt.team_cas == 0
    announce(2, ok, f"fork-join sort n=10^7: registration CAS={rt.reg_cas}, "
                    f"team-size CAS={rt.team_cas}")
    assert sorted_ok and sum_ok, "degenerate-mode sort produced bad output"
    assert rt.reg_cas == 0, f"registration-word CAS count {rt.reg_cas} != 0"
    assert rt.team_cas == 0, f"team-size CAS count {rt.team_cas} != 0"


SORT_VARIANTS = ("Fork", "Randfork", "MMPar")


def _variant_run(variant, a, p, cfg):
    n = len(a)
    scfg = SchedulerConfig(p=p, instrument=True,
                           randomized=(variant == "Randfork"))
    if variant == "MMPar":
        req = qsort.get_best_np(n, cfg, p)
        body = qsort.make_mm_body(a, 0, n - 1, cfg, p)
    else:
        req = 1
        body = qsort.make_fork_body(a, 0, n - 1, cfg)
    return run(body, req, scfg)


def test_acceptance_3_sorting_grid(announce):
    t0 = time.perf_counter()
    p_values = sorted({1, 2, 4, os.cpu_count() or 1})
    cfg = qsort.SortConfig()
    runs = failures = 0
    try:
        for kind in ("random", "gauss", "buckets", "staggered"):
            for n in (10**5, 10**6, 10**7):
                base = generate(Distribution(kind, n, seed=0))
                checksum = int(base.sum(dtype=np.int64))
                for variant in SORT_VARIANTS:
                    for p in p_values:
                        for rep in range(10):
                            a = base.copy()
                            rt = _variant_run(variant, a, p, cfg)
                            runs += 1
                            if (np.any(a[1:] < a[:-1])
                                    or int(a.sum(dtype=np.int64)) != checksum):
                                failures += 1
                                announce(3, False,
                                         f"{variant} {kind} n={n} p={p} "
                                         f"rep={rep}: bad output")
                                assert False, "unsorted or corrupted output"
                            _harvest_exec_log(
                                f"sort:{variant}:{kind}:{n}:{p}:{rep}",
                                rt.exec_log)
    except AssertionError:
        raise
    except Exception as exc:
        announce(3, False, f"sorting grid: {exc}")
        raise
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed < 900
    announce(3, ok, f"sorting grid: {runs} runs over "
                    f"{len(SORT_VARIANTS)} variants x 4 distributions x "
                    f"3 sizes x p in {p_values}, {failures} failures, "
                    f"{elapsed:.0f}s")
    assert ok, f"{failures} failures, {elapsed:.0f}s (budget 900s)"


def test_acceptance_4_partition_oracle(announce):
    rng = np.random.default_rng(0)
    cfg = qsort.SortConfig(block_size=256, cutoff=32, blocks_per_thread=1)
    np_cycle = (1, 2, 4)
    mismatches = 0
    for i in range(1000):
        n = int(rng.integers(8, 10**4 + 1))
        a = rng.integers(0, 10**6, n).astype(np.int32)
        before = a.copy()
        np_ = np_cycle[i % 3]
        q = qsort.partition_standalone(a, 0, n - 1, np_, cfg)
        pv = a[q]
        if not (np.all(a[:q] <= pv) and np.all(a[q + 1:] >= pv)
                and np.array_equal(np.sort(a), np.sort(before))):
            announce(4, False, f"case {i}: np={np_} n={n} postcondition")
            assert False, f"partition postcondition failed (case {i})"
        if np_ == 1:
            b = before.copy()
            q_seq = qsort.seq_partition(b, 0, n - 1)
            if q != q_seq or not np.array_equal(a, b):
                mismatches += 1
    ok = mismatches == 0
    announce(4, ok, f"partition oracle: 1000 arrays, np in {np_cycle}, "
                    f"{mismatches} sequential mismatches")
    assert ok, f"{mismatches} np=1 runs diverged from the sequential partitioner"


def test_acceptance_5_local_id_contract(announce):
    execs = ACC["team_execs"]
    bad = [(tag, team, locals_) for tag, team, locals_ in execs
           if locals_ != list(range(team))]
    ok = not bad and len(execs) > 0
    announce(5, ok, f"local ids exactly {{0..r-1}} in {len(execs)} logged "
                    f"team executions, {len(bad)} violations")
    assert execs, "no team executions were logged by earlier checks"
    assert not bad, f"bad local-id sets: {bad[:5]}"


def _ref_spawn(reg, r_new):
    # independent restatement of the requirement-update rule: growing
    # keeps everyone, shrinking flushes the registrants outside the
    # fixed team (acquired count falls back to t, new epoch) and the
    # requirement never drops below the team size
    r, a, t, n = reg
    if r_new == r:
        return reg
    if r_new > r:
        return RegistrationWord(r_new, a, t, n)
    new_r = r_new if r_new > t else t
    return RegistrationWord(new_r, t, t, (n + 1) % (1 << 16))


def test_acceptance_6_registration_word_tables(announce):
    boundary = (0, 1, (1 << 16) - 1)
    for r in boundary:
        for a in boundary:
            for t in boundary:
                for n in boundary:
                    assert regword.unpack(regword.pack(r, a, t, n)) == \
                        (r, a, t, n)
    checked = 0
    for r in range(1, 9):
        for a in range(1, 9):
            for t in range(1, min(r, a) + 1):
                for n in range(4):
                    reg = RegistrationWord(r, a, t, n)
                    for r_new in range(1, 9):
                        got = regword.on_spawn_requirement(reg, r_new, 8)
                        want = _ref_spawn(reg, r_new)
                        assert got == want, \
                            f"spawn {tuple(reg)} r_new={r_new}: " \
                            f"{tuple(got)} != {tuple(want)}"
                        checked += 1
                    if a == r:
                        assert regword.fix_team(reg) == \
                            RegistrationWord(r, a, r, n), f"fix {tuple(reg)}"
                    else:
                        with pytest.raises(NotReadyError):
                            regword.fix_team(reg)
                    assert regword.reset_to_solo(reg) == \
                        RegistrationWord(1, 1, 1, (n + 1) % (1 << 16))
                    checked += 2
    announce(6, True, f"registration-word tables: {checked} transitions "
                      f"match the reference rules exactly")


def test_acceptance_7_performance_smoke(announce):
    hw = os.cpu_count() or 1
    if hw < 8:
        announce(7, None, f"performance smoke needs >= 8 hardware threads, "
                          f"host has {hw}")
        pytest.skip(f"host has {hw} hardware threads, needs >= 8")
    n = 10**8
    records = run_bench(["random"], [n], variants=["Fork", "MMPar"],
                        reps=3, scheduler_config=SchedulerConfig(p=hw))
    by = {r.variant: r for r in records}
    fork_su = by["Fork"].speedup_avg
    ratio_ok = all(m <= 1.2 * f for m, f in
                   zip(by["MMPar"].runs, by["Fork"].runs))
    ok = fork_su >= 2.0 and ratio_ok
    announce(7, ok, f"n=10^8 random: Fork speedup {fork_su:.2f} (need >= 2.0), "
                    f"MMPar <= 1.2x Fork in 3/3 reps: {ratio_ok}")
    assert fork_su >= 2.0, f"Fork speedup {fork_su:.2f} < 2.0"
    assert ratio_ok, f"MMPar runs {by['MMPar'].runs} vs Fork {by['Fork'].runs}"


def test_acceptance_8_termination_liveness(announce):
    try:
        for p in (1, 2, 4, 8):
            rt = simulate([], SimSchedule(mode="random", p=p, count=1))
            assert rt.report.ok(), f"empty workload p={p}"

            done = []

            def root(ctx):
                for _ in range(10**5):
                    ctx.spawn(lambda c: None)
                ctx.sync()
                done.append(p)

            rt = run(root, 1, SchedulerConfig(p=p))
            assert rt.terminated and done == [p], f"unit tasks p={p}"

        # a chain's next task appears exactly when its siblings have
        # gone idle; the confirmation pass must pull every one back
        result = simulate([(3, 1)],
                          SimSchedule(mode="random", p=4, count=10**4))
        assert result.report.ok(), result.report.lines()
        boundary = sum(1 for ev in result.trace if ev.kind == "idle")
        assert boundary > 0, "schedules never drove a worker idle"
    except Exception as exc:
        announce(8, False, f"termination: {exc}")
        raise
    announce(8, True, "empty and 10^5-task workloads terminate at "
                      "p in {1,2,4,8}; no lost tasks over 10^4 "
                      "idle-boundary schedules")
