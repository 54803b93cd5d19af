"""Team geometry: partner tables, team bounds, local ids, level sizes.

The thread hierarchy is a binary block tree.  Level sizes n_0..n_L obey
n_0 = 1, n_{l-1} < n_l <= 2*n_{l-1}, n_L = p.  A block of size s at
level l splits into a left child of size min(n_{l-1}, s) and a right
child holding the remainder, so for power-of-two p the blocks are
exactly the aligned 2^l ranges and partner lookup degenerates to
flipping bit l of the thread id.  Everything here is precomputed at
startup and immutable afterwards.
"""

from __future__ import annotations

import random

from .errors import ConfigurationError, InfeasibleRequirementError, NotInTeamError


def msb(x: int) -> int:
    """Position of the most significant set bit (floor(log2 x))."""
    if x < 1:
        raise ValueError(f"msb undefined for {x}")
    return x.bit_length() - 1


def default_level_sizes(p: int) -> list[int]:
    """Ceil-halving chain from p down to 1, e.g. p=6 -> [1, 2, 3, 6]."""
    sizes = [p]
    while sizes[-1] > 1:
        sizes.append((sizes[-1] + 1) // 2)
    sizes.reverse()
    return sizes


def validate_level_sizes(sizes: list[int], p: int) -> None:
    if not sizes or sizes[0] != 1:
        raise ConfigurationError(f"level sizes must start at 1, got {sizes}")
    if sizes[-1] != p:
        raise ConfigurationError(f"level sizes must end at p={p}, got {sizes}")
    for prev, cur in zip(sizes, sizes[1:]):
        if not prev < cur <= 2 * prev:
            raise ConfigurationError(
                f"level chain violated: need n_prev < n < 2*n_prev, got {prev} -> {cur}"
            )


class Topology:
    """Immutable team geometry for p threads.

    blocks[l][i] is the (lo, hi) inclusive range of thread i's block at
    level l.  partners[i][l] is thread i's deterministic partner at
    level l (or None where the sibling block is empty).  nprime[i][l]
    is the team size actually reachable by thread i at level l.
    """

    def __init__(self, p: int, level_sizes=None, randomized: bool = False,
                 seed: int = 0):
        if p < 1:
            raise ConfigurationError(f"p must be >= 1, got {p}")
        if level_sizes is None:
            level_sizes = default_level_sizes(p)
        else:
            level_sizes = list(level_sizes)
            validate_level_sizes(level_sizes, p)
        self.p = p
        self.level_sizes = level_sizes
        self.num_levels = len(level_sizes)          # queue count
        self.L = self.num_levels - 1                # partner count
        self.randomized = randomized
        self.seed = seed

        # blocks[l][i] = (lo, hi); siblings[l][i] = (lo, hi) of the
        # other child of i's level-(l+1) parent (hi < lo when empty).
        self.blocks = [[None] * p for _ in range(self.num_levels)]
        self._siblings = [[None] * p for _ in range(self.L)]
        self._split(self.L, 0, p - 1)

        self.nprime = [
            [self.blocks[l][i][1] - self.blocks[l][i][0] + 1
             for l in range(self.num_levels)]
            for i in range(p)
        ]
        self.partners = [[self._partner_det(i, l) for l in range(self.L)]
                         for i in range(p)]

    def _split(self, level, lo, hi):
        for i in range(lo, hi + 1):
            self.blocks[level][i] = (lo, hi)
        if level == 0:
            return
        left_size = min(self.level_sizes[level - 1], hi - lo + 1)
        mid = lo + left_size  # first id of the right child
        for i in range(lo, mid):
            self._siblings[level - 1][i] = (mid, hi)
        for i in range(mid, hi + 1):
            self._siblings[level - 1][i] = (lo, mid - 1)
        self._split(level - 1, lo, mid - 1)
        if mid <= hi:
            self._split(level - 1, mid, hi)

    def _partner_det(self, i, level):
        slo, shi = self._siblings[level][i]
        if shi < slo:
            return None
        offset = i - self.blocks[level][i][0]
        candidate = slo + offset
        return candidate if candidate <= shi else None

    # -- partner selection ------------------------------------------------

    def partner(self, i: int, level: int, rng: random.Random | None = None):
        """Partner of thread i at the given level.

        Deterministic mode mirrors i's offset into the sibling block
        (bit-flip for power-of-two p).  Randomized mode draws uniformly
        from the sibling block, preserving the block hierarchy.
        """
        if not 0 <= level < self.L:
            raise ValueError(f"level {level} out of range [0, {self.L})")
        if self.randomized and rng is not None:
            slo, shi = self._siblings[level][i]
            if shi < slo:
                return None
            return rng.randint(slo, shi)
        return self.partners[i][level]

    def make_rng(self, thread_id: int) -> random.Random:
        """Per-thread generator; reproducible given (seed, p, id)."""
        return random.Random((self.seed << 20) ^ (thread_id * 0x9E3779B1) ^ self.p)

    # -- team geometry ----------------------------------------------------

    def team_bounds(self, coord_id: int, t: int) -> tuple[int, int]:
        """Block boundaries of the smallest block at coord_id holding t threads."""
        for level in range(self.num_levels):
            lo, hi = self.blocks[level][coord_id]
            if hi - lo + 1 >= t:
                return lo, hi
        raise InfeasibleRequirementError(f"no block of size >= {t} at thread {coord_id}")

    def team_window(self, coord_id: int, r: int) -> tuple[int, int]:
        """The r consecutive ids that execute an r-task coordinated by coord_id.

        The window sits at the low end of the enclosing block, except
        when the coordinator would fall outside it, in which case it is
        anchored at the high end.  Either way it contains coord_id.
        """
        lo, hi = self.team_bounds(coord_id, r)
        if coord_id <= lo + r - 1:
            return lo, lo + r - 1
        return hi - r + 1, hi

    def local_id(self, coord_id: int, my_id: int, t: int) -> int:
        lo, hi = self.team_window(coord_id, t)
        if not lo <= my_id <= hi:
            raise NotInTeamError(
                f"thread {my_id} outside team [{lo}, {hi}] of coordinator {coord_id}"
            )
        return my_id - lo

    def overlap(self, i: int, j: int, r: int) -> bool:
        """Whether i and j land in the same block for a task needing r threads."""
        lo, hi = self.team_bounds(i, r)
        return lo <= j <= hi

    def in_window(self, coord_id: int, my_id: int, r: int) -> bool:
        lo, hi = self.team_window(coord_id, r)
        return lo <= my_id <= hi

    def ceil_to_team_size(self, r: int, thread_id: int = 0) -> int:
        """Smallest reachable team size >= r at the given thread."""
        if r < 1:
            raise InfeasibleRequirementError(f"requirement {r} < 1")
        for size in self.nprime[thread_id]:
            if size >= r:
                return size
        raise InfeasibleRequirementError(
            f"requirement {r} exceeds largest team size {self.nprime[thread_id][-1]}"
        )

    def queue_level(self, r: int, thread_id: int = 0) -> int:
        """Queue index for a task requiring r threads: n'_{l-1} < r <= n'_l."""
        prev = 0
        for level, size in enumerate(self.nprime[thread_id]):
            if prev < r <= size:
                return level
            prev = size
        raise InfeasibleRequirementError(
            f"requirement {r} exceeds largest team size {self.nprime[thread_id][-1]}"
        )

    def level_reach(self, thread_id: int, level: int) -> int:
        """Team size reachable after merging through partner `level` (n'_{level+1})."""
        return self.nprime[thread_id][level + 1]
