"""Packed per-thread registration word and its pure transition rules.

The word holds four 16-bit fields describing the team being negotiated
around the task at the bottom of a thread's queue:

    r  required threads for that task
    a  acquired (registered) threads, coordinator included
    t  teamed threads (threads locked into the fixed team)
    N  epoch counter invalidating stale registrations

Layout: r in bits 0-15, a in 16-31, t in 32-47, N in 48-63.  All live
mutations go through a compare-and-exchange cell (AtomicWord); the
transitions here are pure and shared by the threaded runtime and the
deterministic simulation harness.
"""

from __future__ import annotations

import threading
from typing import NamedTuple

from .errors import (
    EncodingOverflowError,
    IllegalDeregistrationError,
    InfeasibleRequirementError,
    NotReadyError,
)

FIELD_BITS = 16
FIELD_MASK = (1 << FIELD_BITS) - 1
EPOCH_MOD = 1 << FIELD_BITS


class RegistrationWord(NamedTuple):
    r: int
    a: int
    t: int
    n: int


SOLO = RegistrationWord(1, 1, 1, 0)


def pack(r: int, a: int, t: int, n: int) -> int:
    for name, value in (("r", r), ("a", a), ("t", t), ("N", n)):
        if not 0 <= value <= FIELD_MASK:
            raise EncodingOverflowError(
                f"field {name}={value} does not fit in {FIELD_BITS} bits"
            )
    return r | (a << 16) | (t << 32) | (n << 48)


def unpack(word: int) -> RegistrationWord:
    return RegistrationWord(
        word & FIELD_MASK,
        (word >> 16) & FIELD_MASK,
        (word >> 32) & FIELD_MASK,
        (word >> 48) & FIELD_MASK,
    )


def on_spawn_requirement(reg: RegistrationWord, r_new: int, p: int) -> RegistrationWord:
    """Word after the owner pushes a task requiring ``r_new`` threads.

    A larger requirement simply replaces r.  A smaller one resets the
    acquired count to the current team size and bumps the epoch so that
    threads outside the team re-register.  r never drops below t.
    """
    if r_new < 1 or r_new > p:
        raise InfeasibleRequirementError(f"requirement {r_new} not in [1, {p}]")
    if r_new == reg.r:
        return reg
    if r_new > reg.r:
        return RegistrationWord(max(r_new, reg.t), reg.a, reg.t, reg.n)
    return RegistrationWord(
        max(r_new, reg.t), reg.t, reg.t, (reg.n + 1) % EPOCH_MOD
    )


def try_acquire_delta(reg: RegistrationWord, delta: int) -> RegistrationWord:
    """Word with the acquired count changed by +/-1.

    Deregistration below the teamed count is rejected: a thread locked
    into a fixed team cannot drop out.
    """
    if delta not in (1, -1):
        raise ValueError(f"delta must be +1 or -1, got {delta}")
    if delta == -1 and reg.a - 1 < reg.t:
        raise IllegalDeregistrationError(
            f"cannot deregister below team size (a={reg.a}, t={reg.t})"
        )
    return reg._replace(a=reg.a + delta)


def fix_team(reg: RegistrationWord) -> RegistrationWord:
    """Word with the team fixed (t <- r); requires a == r."""
    if reg.a != reg.r:
        raise NotReadyError(f"team not complete (a={reg.a}, r={reg.r})")
    return reg._replace(t=reg.r)


def reset_to_solo(reg: RegistrationWord) -> RegistrationWord:
    """Word after disbanding: back to a solo thread, epoch bumped."""
    return RegistrationWord(1, 1, 1, (reg.n + 1) % EPOCH_MOD)


class AtomicWord:
    """A 64-bit cell mutated only by compare-and-exchange.

    CPython cannot express a hardware CAS; a per-cell lock gives the
    same linearizable semantics.  ``counter`` is an optional callable
    invoked once per compare-and-exchange attempt, used to verify that
    the degenerate all-r=1 mode never touches the registration word.
    """

    __slots__ = ("_value", "_lock", "counter")

    def __init__(self, value: int = 0, counter=None):
        self._value = value
        self._lock = threading.Lock()
        self.counter = counter

    def load(self) -> int:
        return self._value

    def store(self, value: int) -> None:
        # Initialization only; protocol code must use compare_exchange.
        self._value = value

    def compare_exchange(self, expected: int, desired: int) -> bool:
        if self.counter is not None:
            self.counter()
        with self._lock:
            if self._value == expected:
                self._value = desired
                return True
            return False
