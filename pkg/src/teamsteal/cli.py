"""Command-line front-end: benchmark runs and protocol verification."""

from __future__ import annotations

import argparse
import sys

from . import bench, simharness
from .errors import TeamStealError
from .scheduler import SchedulerConfig


def _parse_sizes(raw):
    return [int(x) for x in raw.split(",")]


def _parse_workload(raw):
    """Chains as 'depth:r' pairs, r optionally a /-separated cycle.

    Example: '3:1,2:2/4' is a chain of three r=1 tasks plus a chain of
    two tasks alternating r=2 and r=4.
    """
    workload = []
    for part in raw.split(","):
        depth, _, rspec = part.partition(":")
        rs = [int(x) for x in rspec.split("/")]
        workload.append((int(depth), rs[0] if len(rs) == 1 else rs))
    return workload


def _add_bench_parser(sub):
    p = sub.add_parser("bench", help="run the sorting benchmarks")
    p.add_argument("--dist", default="random,gauss,buckets,staggered",
                   help="comma-separated distribution names")
    p.add_argument("--sizes", type=_parse_sizes,
                   default=[10**7, 2**23 - 1, 2**25 - 1, 2**27 - 1, 10**8],
                   help="comma-separated element counts")
    p.add_argument("--variants", default="SeqQS,Fork,Randfork,MMPar",
                   help="comma-separated variants (SeqSTL always timed)")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--threads", type=int, default=None,
                   help="worker thread count (default: machine)")
    p.add_argument("--levels", default=None,
                   help="comma-separated team-size chain, e.g. 1,2,4,8")
    p.add_argument("--randomized", action="store_true",
                   help="randomized partner selection for all variants")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "markdown-table"),
                   default="csv")
    p.add_argument("--out", default=None, help="output file (default stdout)")


def _add_verify_parser(sub):
    p = sub.add_parser("verify", help="simulate and check the protocol")
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--mode", choices=("random", "exhaustive"),
                   default="random")
    p.add_argument("--seeds", type=int, default=100,
                   help="number of seeded schedules (random mode)")
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--steps", type=int, default=1_000_000,
                   help="step budget")
    p.add_argument("--workload", type=_parse_workload, default=[(2, [1, 2])],
                   help="chains as depth:r pairs, e.g. 3:1,2:2/4")
    p.add_argument("--trace", action="store_true",
                   help="dump the final schedule's trace")


def _cmd_bench(args):
    import os
    threads = args.threads
    if threads is None:
        threads = os.cpu_count() or 1
    scfg = SchedulerConfig.from_env(
        p=threads,
        level_sizes=_parse_sizes(args.levels) if args.levels else None,
        randomized=args.randomized,
        seed=args.seed,
    )
    records = bench.run_bench(
        dists=args.dist.split(","),
        sizes=args.sizes,
        variants=args.variants.split(","),
        reps=args.reps,
        scheduler_config=scfg,
        seed=args.seed,
        progress=lambda rec: print(
            f"# {rec.distribution} n={rec.n} {rec.variant}: "
            f"avg {rec.avg if rec.avg else sum(rec.runs)/len(rec.runs):.3f}s",
            file=sys.stderr),
    )
    text = bench.emit(records, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_verify(args):
    sched = simharness.SimSchedule(
        mode=args.mode, seed=args.seed, count=args.seeds,
        max_steps=args.steps, p=args.p)
    result = simharness.simulate(args.workload, sched)
    if args.trace:
        print(simharness.format_trace(result.trace))
    if args.mode == "exhaustive":
        print(f"exhaustive: {result.states} states, "
              f"{result.terminals} terminal states, {result.steps} steps")
    else:
        print(f"random: {result.schedules} schedules, {result.steps} steps")
    for line in result.report.lines():
        print(line)
    return 0 if result.report.ok() else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="teamsteal",
        description="work-stealing scheduler with deterministic "
                    "team-building: benchmarks and protocol checks")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_bench_parser(sub)
    _add_verify_parser(sub)
    args = parser.parse_args(argv)
    try:
        if args.command == "bench":
            return _cmd_bench(args)
        return _cmd_verify(args)
    except TeamStealError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
