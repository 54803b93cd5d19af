"""Quicksort variants used as the scheduler benchmark workload.

Three entry points:

  * seq_sort: sequential quicksort (median-of-three, library sort below
    the cutoff), compiled with numba so it releases the GIL.
  * make_fork_body: classic fork-join task body; every task partitions
    its span and spawns single-thread subtasks.
  * make_mm_body: mixed-mode body; a team of np threads partitions the
    span cooperatively with the three-phase block-neutralization
    scheme, then local id 0 spawns recursive tasks sized by
    get_best_np.

The parallel partitioner splits the span (minus the pivot slot) into
full blocks; teams neutralize left/right block pairs, drain leftovers
through a per-side exchanger, and thread 0 finishes the remaining
blocks plus the tail sequentially.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigurationError

LEFT_DONE = "left-done"
RIGHT_DONE = "right-done"
BOTH_DONE = "both-done"


@dataclass(frozen=True)
class SortConfig:
    block_size: int = 4096       # elements per partition block
    cutoff: int = 512            # below this, library sort
    blocks_per_thread: int = 128  # min average blocks per team thread
    spawn_threshold: int = 1 << 16  # below this, a task sorts in place

    def __post_init__(self):
        if self.block_size < 1 or self.cutoff < 1 or self.blocks_per_thread < 1:
            raise ConfigurationError(f"invalid sort configuration {self}")


def get_best_np(n: int, cfg: SortConfig, p: int) -> int:
    """Largest power-of-two np <= p whose team gets enough blocks, min 1."""
    best = 1
    np_ = 2
    while np_ <= p and n >= np_ * cfg.blocks_per_thread * cfg.block_size:
        best = np_
        np_ *= 2
    return best


# ----------------------------------------------------------------------
# compiled kernels (nogil: they run concurrently under the scheduler)

@njit(nogil=True, cache=True)
def _partition_by_value(a, s, e, pv):
    """Two-pointer split of a[s:e]: [s, m) <= pv, [m, e) >= pv."""
    i = s
    j = e - 1
    while i <= j:
        while i <= j and a[i] < pv:
            i += 1
        while i <= j and a[j] > pv:
            j -= 1
        if i < j:
            a[i], a[j] = a[j], a[i]
            i += 1
            j -= 1
        elif i == j:
            if a[i] < pv:
                i += 1
            break
    return i


@njit(nogil=True, cache=True)
def seq_partition(a, lo, hi):
    """Median-of-three partition of a[lo:hi+1]; returns the pivot index q.

    Afterwards a[i] <= a[q] for i < q and a[j] >= a[q] for j > q; scans
    stop on equal elements, so runs of duplicates split evenly.
    """
    mid = (lo + hi) // 2
    if a[mid] < a[lo]:
        a[mid], a[lo] = a[lo], a[mid]
    if a[hi] < a[lo]:
        a[hi], a[lo] = a[lo], a[hi]
    if a[hi] < a[mid]:
        a[hi], a[mid] = a[mid], a[hi]
    a[mid], a[hi] = a[hi], a[mid]   # pivot parked at hi
    pv = a[hi]
    m = _partition_by_value(a, lo, hi, pv)
    a[m], a[hi] = a[hi], a[m]
    return m


@njit(nogil=True, cache=True)
def _seq_qsort(a, lo, hi, cutoff):
    # explicit stack, larger side deferred: depth <= log2(n)
    stack = np.empty((80, 2), np.int64)
    sp = 0
    stack[0, 0] = lo
    stack[0, 1] = hi
    sp = 1
    while sp > 0:
        sp -= 1
        l = stack[sp, 0]
        h = stack[sp, 1]
        while h - l + 1 > cutoff:
            q = seq_partition(a, l, h)
            if q - l < h - q:
                stack[sp, 0] = q + 1
                stack[sp, 1] = h
                h = q - 1
            else:
                stack[sp, 0] = l
                stack[sp, 1] = q - 1
                l = q + 1
            sp += 1
        if l < h:
            a[l:h + 1].sort()


@njit(nogil=True, cache=True)
def _neutralize(a, li, lhi, ri, rhi, pv):
    """Swap misplaced elements between a left and a right block.

    Scans a[li:lhi] for elements > pv and a[ri:rhi] for elements < pv,
    exchanging pairwise.  Returns the final scan positions; a side is
    neutralized when its position reached its block end.
    """
    while True:
        while li < lhi and a[li] <= pv:
            li += 1
        while ri < rhi and a[ri] >= pv:
            ri += 1
        if li >= lhi or ri >= rhi:
            break
        a[li], a[ri] = a[ri], a[li]
        li += 1
        ri += 1
    return li, ri


@njit(nogil=True, cache=True)
def _block_swap(a, x, y, count):
    for k in range(count):
        a[x + k], a[y + k] = a[y + k], a[x + k]


@njit(nogil=True, cache=True)
def _fold_tail(a, m, tail_lo, tail_hi, pv):
    # move tail elements < pv down to the boundary m, displaced
    # boundary elements (>= pv) go to the tail, which stays in the
    # upper region
    for k in range(tail_lo, tail_hi):
        if a[k] < pv:
            a[k], a[m] = a[m], a[k]
            m += 1
    return m


def seq_sort(a, lo=0, hi=None, cfg: SortConfig | None = None) -> None:
    """Sequential in-place quicksort of a[lo:hi+1]."""
    cfg = cfg or SortConfig()
    if hi is None:
        hi = len(a) - 1
    if hi > lo:
        _seq_qsort(a, lo, hi, cfg.cutoff)


def neutralize(a, left: tuple, right: tuple, pivot) -> str:
    """Neutralize a (start, end) left block against a right block.

    Returns which side(s) were fully neutralized; block contents are
    mutated in place.  Exposed for direct testing; the partitioner
    calls the compiled kernel with running positions.
    """
    li, ri = _neutralize(a, left[0], left[1], right[0], right[1], pivot)
    if li >= left[1] and ri >= right[1]:
        return BOTH_DONE
    if li >= left[1]:
        return LEFT_DONE
    return RIGHT_DONE


# ----------------------------------------------------------------------
# cooperative three-phase partitioner

class _PartitionState:
    """Shared coordination state for one parallel partition call."""

    __slots__ = ("lock", "pv", "lo", "hi", "nb", "bs", "taken_l", "taken_r",
                 "dirty_left", "dirty_right", "q")

    def __init__(self, pv, lo, hi, nb, bs):
        self.lock = threading.Lock()
        self.pv = pv
        self.lo = lo
        self.hi = hi
        self.nb = nb
        self.bs = bs
        self.taken_l = 0
        self.taken_r = 0
        self.dirty_left = []    # (block_idx, position) exchanger, left side
        self.dirty_right = []
        self.q = -1

    def acquire_left(self):
        with self.lock:
            if self.taken_l + self.taken_r >= self.nb:
                return None
            idx = self.taken_l
            self.taken_l += 1
            return idx

    def acquire_right(self):
        with self.lock:
            if self.taken_l + self.taken_r >= self.nb:
                return None
            self.taken_r += 1
            return self.nb - self.taken_r

    def block_bounds(self, idx):
        start = self.lo + idx * self.bs
        return start, start + self.bs


def _phase1(a, st, deposit):
    """Neutralize freshly acquired block pairs until one side runs out.

    Unfinished blocks are deposited into the per-side exchanger lists.
    """
    lb = st.acquire_left()
    rb = st.acquire_right()
    li = ri = 0
    if lb is not None:
        li = st.block_bounds(lb)[0]
    if rb is not None:
        ri = st.block_bounds(rb)[0]
    while lb is not None and rb is not None:
        li, ri = _neutralize(a, li, st.block_bounds(lb)[1],
                             ri, st.block_bounds(rb)[1], st.pv)
        if li >= st.block_bounds(lb)[1]:
            lb = st.acquire_left()
            if lb is not None:
                li = st.block_bounds(lb)[0]
        if ri >= st.block_bounds(rb)[1]:
            rb = st.acquire_right()
            if rb is not None:
                ri = st.block_bounds(rb)[0]
    if lb is not None:
        deposit(st.dirty_left, (lb, li))
    if rb is not None:
        deposit(st.dirty_right, (rb, ri))


def _phase2(a, st, local_id):
    """Drain the exchanger: pair dirty blocks and keep neutralizing.

    A thread whose local id is at least the number of pairable block
    pairs becomes a producer (its blocks are already deposited) and
    leaves; the rest consume until nothing can be paired.  Thread 0
    picks up whatever remains in phase 3, so leaving early is safe.
    """
    while True:
        with st.lock:
            pairs = min(len(st.dirty_left), len(st.dirty_right))
            if local_id >= pairs:
                return
            lb, li = st.dirty_left.pop()
            rb, ri = st.dirty_right.pop()
        li, ri = _neutralize(a, li, st.block_bounds(lb)[1],
                             ri, st.block_bounds(rb)[1], st.pv)
        with st.lock:
            if li < st.block_bounds(lb)[1]:
                st.dirty_left.append((lb, li))
            if ri < st.block_bounds(rb)[1]:
                st.dirty_right.append((rb, ri))


def _phase3(a, st):
    """Thread 0: relocate dirty blocks, partition them plus the tail."""
    bs = st.bs
    split = st.taken_l
    dl = sorted(idx for idx, _pos in st.dirty_left)
    dr = sorted(idx for idx, _pos in st.dirty_right)
    # dirty left blocks to the top of the left region
    want = set(range(split - len(dl), split))
    for src, dst in zip(sorted(set(dl) - want), sorted(want - set(dl))):
        _block_swap(a, st.lo + src * bs, st.lo + dst * bs, bs)
    # dirty right blocks to the bottom of the right region
    want = set(range(split, split + len(dr)))
    for src, dst in zip(sorted(set(dr) - want), sorted(want - set(dr))):
        _block_swap(a, st.lo + src * bs, st.lo + dst * bs, bs)
    zone_lo = st.lo + (split - len(dl)) * bs
    zone_hi = st.lo + (split + len(dr)) * bs
    m = _partition_by_value(a, zone_lo, zone_hi, st.pv)
    m = _fold_tail(a, m, st.lo + st.nb * bs, st.hi, st.pv)
    a[m], a[st.hi] = a[st.hi], a[m]
    return m


def parallel_partition(a, lo: int, hi: int, ctx, cfg: SortConfig) -> int:
    """Cooperatively partition a[lo:hi+1]; all team members call this.

    Returns the final pivot index q (a[i] <= a[q] <= a[j] for
    i < q < j).  With a team of one this is exactly the sequential
    partitioner.
    """
    if ctx.team_size == 1:
        return int(seq_partition(a, lo, hi))
    if ctx.local_id == 0:
        mid = (lo + hi) // 2
        if a[mid] < a[lo]:
            a[mid], a[lo] = a[lo], a[mid]
        if a[hi] < a[lo]:
            a[hi], a[lo] = a[lo], a[hi]
        if a[hi] < a[mid]:
            a[hi], a[mid] = a[mid], a[hi]
        a[mid], a[hi] = a[hi], a[mid]
        nb = (hi - lo) // cfg.block_size   # full blocks over [lo, hi)
        st = _PartitionState(a[hi], lo, hi, nb, cfg.block_size)
        ctx.shared["partition"] = st
    ctx.barrier_wait()
    st = ctx.shared["partition"]
    if st.nb == 0:
        # span smaller than one block: nothing to do in parallel
        ctx.barrier_wait()
        if ctx.local_id == 0:
            st.q = int(_partition_by_value(a, lo, hi, st.pv))
            a[st.q], a[hi] = a[hi], a[st.q]
        ctx.barrier_wait()
        return st.q

    def deposit(side, entry):
        with st.lock:
            side.append(entry)

    _phase1(a, st, deposit)
    _phase2(a, st, ctx.local_id)
    ctx.barrier_wait()
    if ctx.local_id == 0:
        st.q = _phase3(a, st)
    ctx.barrier_wait()
    return st.q


# ----------------------------------------------------------------------
# scheduler task bodies

def _task_sort(ctx, a, lo, hi, cfg):
    """Partition-and-spawn loop shared by the fork and mm(np=1) paths."""
    while hi - lo + 1 > cfg.spawn_threshold:
        q = seq_partition(a, lo, hi)
        if q - lo < hi - q:
            if q - 1 > lo:
                ctx.spawn(make_fork_body(a, lo, q - 1, cfg), 1)
            lo = q + 1
        else:
            if q + 1 < hi:
                ctx.spawn(make_fork_body(a, q + 1, hi, cfg), 1)
            hi = q - 1
    if hi > lo:
        _seq_qsort(a, lo, hi, cfg.cutoff)


def make_fork_body(a, lo, hi, cfg: SortConfig):
    """Task body sorting a[lo:hi+1] with single-thread subtasks."""
    def body(ctx):
        _task_sort(ctx, a, lo, hi, cfg)
    return body


def make_mm_body(a, lo, hi, cfg: SortConfig, p: int):
    """Task body sorting a[lo:hi+1] with team-sized recursive tasks."""
    def body(ctx):
        if ctx.team_size == 1:
            _task_sort(ctx, a, lo, hi, cfg)
            return
        q = parallel_partition(a, lo, hi, ctx, cfg)
        if ctx.local_id != 0:
            return
        for s, e in ((lo, q - 1), (q + 1, hi)):
            n = e - s + 1
            if n <= cfg.cutoff:
                if n > 1:
                    a[s:e + 1].sort()
            else:
                ctx.spawn(make_mm_body(a, s, e, cfg, p),
                          get_best_np(n, cfg, p))
        ctx.sync()
    return body


# ----------------------------------------------------------------------
# standalone team runner, used to exercise the partitioner without the
# scheduler (the oracle tests drive it directly)

class _BareTeam:
    def __init__(self, team_size, local_id, shared, barrier):
        self.team_size = team_size
        self.local_id = local_id
        self.shared = shared
        self._barrier = barrier

    def barrier_wait(self):
        self._barrier.wait()


def partition_standalone(a, lo: int, hi: int, np_: int,
                         cfg: SortConfig | None = None) -> int:
    """Run parallel_partition with np_ raw threads; returns q."""
    cfg = cfg or SortConfig()
    if np_ == 1:
        ctx = _BareTeam(1, 0, {}, None)
        return parallel_partition(a, lo, hi, ctx, cfg)
    shared = {}
    barrier = threading.Barrier(np_)
    results = [None] * np_
    errors = []

    def runner(i):
        try:
            ctx = _BareTeam(np_, i, shared, barrier)
            results[i] = parallel_partition(a, lo, hi, ctx, cfg)
        except Exception as exc:   # noqa: BLE001 - surfaced below
            errors.append(exc)
            barrier.abort()

    threads = [threading.Thread(target=runner, args=(i,)) for i in range(np_)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return results[0]
