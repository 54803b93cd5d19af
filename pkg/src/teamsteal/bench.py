"""Benchmark input generation, timed runs, and table output.

Inputs are 32-bit integers in four classic sorting-benchmark
distributions (uniform random, sum-of-uniforms gaussian, buckets,
staggered; the latter two follow the Helman/Bader/JaJa benchmark
conventions).  Every timed run is verified (sorted and checksum
preserved) before its time is recorded; any failure aborts hard.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field

import numpy as np

from . import qsort
from .errors import ConfigurationError, VerificationError
from .scheduler import SchedulerConfig, run

VARIANTS = ("SeqSTL", "SeqQS", "Fork", "Randfork", "MMPar")
DISTRIBUTIONS = ("random", "gauss", "buckets", "staggered")

_VALUE_RANGE = 1 << 31   # values drawn from [0, 2^31)


@dataclass(frozen=True)
class Distribution:
    kind: str
    n: int
    seed: int = 0
    regions: int = 8     # region count for buckets/staggered patterns

    def __post_init__(self):
        if self.kind not in DISTRIBUTIONS:
            raise ConfigurationError(f"unknown distribution {self.kind!r}")
        if self.n < 0:
            raise ConfigurationError(f"negative size {self.n}")


def generate(d: Distribution) -> np.ndarray:
    """Deterministic int32 array for the given distribution parameters."""
    rng = np.random.Generator(np.random.PCG64(d.seed))
    n = d.n
    if d.kind == "random":
        return rng.integers(0, _VALUE_RANGE, n, dtype=np.int64).astype(np.int32)
    if d.kind == "gauss":
        # mean of four uniforms: mid-range centered, variance a quarter
        # of the uniform's
        acc = np.zeros(n, dtype=np.int64)
        for _ in range(4):
            acc += rng.integers(0, _VALUE_RANGE, n, dtype=np.int64)
        return (acc // 4).astype(np.int32)
    p = d.regions
    bucket_width = _VALUE_RANGE // p
    out = np.empty(n, dtype=np.int32)
    region_len = max(n // p, 1)
    if d.kind == "buckets":
        # region i cycles through all value buckets starting at bucket i
        sub = max(region_len // p, 1)
        for i in range(p):
            r_lo = i * region_len
            r_hi = n if i == p - 1 else min((i + 1) * region_len, n)
            pos = r_lo
            j = 0
            while pos < r_hi:
                b = (i + j) % p
                cnt = min(sub, r_hi - pos)
                out[pos:pos + cnt] = rng.integers(
                    b * bucket_width, (b + 1) * bucket_width, cnt,
                    dtype=np.int64).astype(np.int32)
                pos += cnt
                j += 1
        return out
    # staggered: first half of the regions draw from the odd buckets,
    # second half from the even ones
    for i in range(p):
        r_lo = i * region_len
        r_hi = n if i == p - 1 else min((i + 1) * region_len, n)
        if r_hi <= r_lo:
            continue
        b = 2 * i + 1 if i < p // 2 else 2 * (i - p // 2)
        b %= p
        out[r_lo:r_hi] = rng.integers(
            b * bucket_width, (b + 1) * bucket_width, r_hi - r_lo,
            dtype=np.int64).astype(np.int32)
    return out


@dataclass
class BenchRecord:
    distribution: str
    n: int
    variant: str
    runs: list = field(default_factory=list)   # wall-clock seconds
    avg: float = 0.0
    min: float = 0.0
    speedup_avg: float = 0.0
    speedup_min: float = 0.0

    def finish(self, baseline_avg=None, baseline_min=None):
        self.avg = sum(self.runs) / len(self.runs)
        self.min = min(self.runs)
        if baseline_avg:
            self.speedup_avg = baseline_avg / self.avg
        if baseline_min:
            self.speedup_min = baseline_min / self.min


def _sort_once(variant, a, scfg: SchedulerConfig, cfg: qsort.SortConfig):
    if variant == "SeqSTL":
        a.sort()
        return
    if variant == "SeqQS":
        qsort.seq_sort(a, cfg=cfg)
        return
    n = len(a)
    if variant in ("Fork", "Randfork"):
        sc = scfg
        if variant == "Randfork":
            sc = SchedulerConfig(**{**scfg.__dict__, "randomized": True})
        run(qsort.make_fork_body(a, 0, n - 1, cfg), 1, sc)
        return
    if variant == "MMPar":
        req = qsort.get_best_np(n, cfg, scfg.p)
        run(qsort.make_mm_body(a, 0, n - 1, cfg, scfg.p), req, scfg)
        return
    raise ConfigurationError(f"unknown variant {variant!r}")


def run_bench(dists, sizes, variants=VARIANTS, reps: int = 10,
              scheduler_config: SchedulerConfig | None = None,
              sort_config: qsort.SortConfig | None = None,
              seed: int = 0, progress=None):
    """Timed, verified runs for every (distribution, size, variant) cell.

    The SeqSTL baseline is always measured (it anchors the speedups)
    even when not requested; requested variants are reported in the
    given order.  Returns a list of BenchRecord.
    """
    if reps < 1:
        raise ConfigurationError("reps must be >= 1")
    scfg = scheduler_config or SchedulerConfig()
    cfg = sort_config or qsort.SortConfig()
    variants = list(variants)
    records = []
    for kind in dists:
        for n in sizes:
            base = generate(Distribution(kind, n, seed))
            checksum = int(base.sum(dtype=np.int64))
            cell_records = {}
            for variant in dict.fromkeys(["SeqSTL", *variants]):
                rec = BenchRecord(kind, n, variant)
                for rep in range(reps):
                    a = base.copy()
                    t0 = time.perf_counter()
                    _sort_once(variant, a, scfg, cfg)
                    rec.runs.append(time.perf_counter() - t0)
                    if len(a) and (np.any(a[1:] < a[:-1])
                                   or int(a.sum(dtype=np.int64)) != checksum):
                        raise VerificationError(
                            f"unsorted or corrupted output: {variant} "
                            f"dist={kind} n={n} rep={rep}")
                cell_records[variant] = rec
                if progress is not None:
                    progress(rec)
            baseline = cell_records["SeqSTL"]
            baseline.finish()
            for variant, rec in cell_records.items():
                if variant != "SeqSTL":
                    rec.finish(baseline.avg, baseline.min)
            records.extend(cell_records[v]
                           for v in dict.fromkeys(["SeqSTL", *variants]))
    return records


# ----------------------------------------------------------------------
# output

_COLUMNS = ("Type", "Size", "Seq/STL", "SeqQS", "Fork", "SU",
            "Randfork", "MMPar", "SU")


def _rows(records):
    cells = {}
    order = []
    for rec in records:
        key = (rec.distribution, rec.n)
        if key not in cells:
            cells[key] = {}
            order.append(key)
        cells[key][rec.variant] = rec
    rows = []
    for key in order:
        group = cells[key]

        def t(v):
            return f"{group[v].avg:.3f}" if v in group else ""

        def su(v):
            return f"{group[v].speedup_avg:.1f}" if v in group else ""

        rows.append((key[0], str(key[1]), t("SeqSTL"), t("SeqQS"),
                     t("Fork"), su("Fork"), t("Randfork"), t("MMPar"),
                     su("MMPar")))
    return rows


def emit(records, fmt: str = "csv") -> str:
    """Render records as one table row per (distribution, size)."""
    rows = _rows(records)
    if fmt == "csv":
        out = io.StringIO()
        out.write(",".join(_COLUMNS) + "\n")
        for row in rows:
            out.write(",".join(row) + "\n")
        return out.getvalue()
    if fmt == "markdown-table":
        widths = [max(len(c), *(len(r[i]) for r in rows)) if rows else len(c)
                  for i, c in enumerate(_COLUMNS)]
        lines = ["| " + " | ".join(c.ljust(w) for c, w in
                                   zip(_COLUMNS, widths)) + " |",
                 "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
        for row in rows:
            lines.append("| " + " | ".join(c.ljust(w) for c, w in
                                           zip(row, widths)) + " |")
        return "\n".join(lines) + "\n"
    raise ConfigurationError(f"unknown output format {fmt!r}")


def parse_csv(text: str):
    """Inverse of emit(..., 'csv') at the table level."""
    lines = [ln for ln in text.splitlines() if ln]
    header = tuple(lines[0].split(","))
    if header != _COLUMNS:
        raise ConfigurationError(f"unexpected header {header}")
    return [tuple(ln.split(",")) for ln in lines[1:]]
