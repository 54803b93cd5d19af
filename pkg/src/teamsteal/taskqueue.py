"""Per-worker task queues: one deque per level plus the bulk steal.

Owner operations (push_bottom/pop_bottom) and thief operations
(pop_top/size) may race; each level deque carries its own lock, which
under the GIL plays the role the lock-free ABP deque plays in a native
implementation.  Queues grow without bound, so pushes never fail.
"""

from __future__ import annotations

import threading
from collections import deque

from .errors import InfeasibleRequirementError


class LevelDeque:
    """Double-ended task queue for one level: owner at bottom, thieves at top."""

    __slots__ = ("_items", "_lock")

    def __init__(self):
        self._items = deque()
        self._lock = threading.Lock()

    def push_bottom(self, task) -> None:
        with self._lock:
            self._items.append(task)

    def pop_bottom(self):
        with self._lock:
            if self._items:
                return self._items.pop()
            return None

    def peek_bottom(self):
        with self._lock:
            if self._items:
                return self._items[-1]
            return None

    def pop_top(self):
        with self._lock:
            if self._items:
                return self._items.popleft()
            return None

    def size(self) -> int:
        return len(self._items)

    def __len__(self) -> int:
        return len(self._items)


class QueueSet:
    """All level deques of one worker.

    Placement is by thread requirement: a task requiring r threads goes
    to the unique level l with n'_{l-1} < r <= n'_l of the owning
    thread, so level 0 holds the plain r=1 tasks.
    """

    __slots__ = ("levels", "_topo", "_owner")

    def __init__(self, topo, owner_id: int):
        self.levels = [LevelDeque() for _ in range(topo.num_levels)]
        self._topo = topo
        self._owner = owner_id

    def level_for(self, r: int) -> int:
        return self._topo.queue_level(r, self._owner)

    def push_bottom(self, task) -> None:
        if task.req > self._topo.p:
            raise InfeasibleRequirementError(
                f"task requires {task.req} threads, only {self._topo.p} exist"
            )
        self.levels[self.level_for(task.req)].push_bottom(task)

    def pop_bottom(self, level: int):
        return self.levels[level].pop_bottom()

    def is_empty(self) -> bool:
        return all(len(q) == 0 for q in self.levels)

    def total_size(self) -> int:
        return sum(len(q) for q in self.levels)

    def lowest_nonempty(self):
        for level, q in enumerate(self.levels):
            if len(q) > 0:
                return level
        return None

    def highest_nonempty_at_most(self, max_level: int):
        for level in range(min(max_level, len(self.levels) - 1), -1, -1):
            if len(self.levels[level]) > 0:
                return level
        return None


def popappend(thief: QueueSet, victim_q: LevelDeque, count: int):
    """Move up to ``count`` tasks from the victim's top to the thief's bottom.

    Returns (transferred, last): ``transferred`` are the tasks enqueued
    at the thief's bottom in transfer order, ``last`` is the final task
    taken, handed back directly instead of being enqueued so it cannot
    be stolen straight back.  (None, []) means nothing was available.
    """
    transferred = []
    last = None
    moved = 0
    while moved < count:
        task = victim_q.pop_top()
        if task is None:
            break
        if last is not None:
            thief.push_bottom(last)
            transferred.append(last)
        last = task
        moved += 1
    return transferred, last
