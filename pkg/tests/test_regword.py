"""Registration-word packing and transition rules."""

from __future__ import annotations

import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from teamsteal import regword
from teamsteal.errors import (
    EncodingOverflowError,
    IllegalDeregistrationError,
    InfeasibleRequirementError,
    NotReadyError,
)
from teamsteal.regword import (
    EPOCH_MOD,
    SOLO,
    AtomicWord,
    RegistrationWord,
    fix_team,
    on_spawn_requirement,
    pack,
    reset_to_solo,
    try_acquire_delta,
    unpack,
)

FIELDS = st.integers(min_value=0, max_value=(1 << 16) - 1)


def test_solo_word():
    assert SOLO == RegistrationWord(1, 1, 1, 0)
    assert unpack(pack(*SOLO)) == SOLO


@given(FIELDS, FIELDS, FIELDS, FIELDS)
def test_pack_unpack_roundtrip(r, a, t, n):
    assert unpack(pack(r, a, t, n)) == (r, a, t, n)


def test_pack_field_layout():
    # r occupies the low 16 bits, then a, t, N
    assert pack(3, 0, 0, 0) == 3
    assert pack(0, 3, 0, 0) == 3 << 16
    assert pack(0, 0, 3, 0) == 3 << 32
    assert pack(0, 0, 0, 3) == 3 << 48


@pytest.mark.parametrize("bad", [-1, 1 << 16])
def test_pack_overflow(bad):
    with pytest.raises(EncodingOverflowError):
        pack(bad, 1, 1, 0)


def test_spawn_requirement_grows():
    reg = RegistrationWord(2, 2, 2, 5)
    assert on_spawn_requirement(reg, 4, 8) == RegistrationWord(4, 2, 2, 5)


def test_spawn_requirement_equal_is_noop():
    reg = RegistrationWord(4, 3, 2, 1)
    assert on_spawn_requirement(reg, 4, 8) is reg


def test_spawn_requirement_shrinks_with_epoch_bump():
    # smaller requirement flushes registrants down to the team and
    # clamps r at the team size
    reg = RegistrationWord(4, 3, 3, 1)
    assert on_spawn_requirement(reg, 1, 8) == RegistrationWord(3, 3, 3, 2)


def test_spawn_requirement_epoch_wraps():
    reg = RegistrationWord(4, 1, 1, EPOCH_MOD - 1)
    assert on_spawn_requirement(reg, 2, 8).n == 0


@pytest.mark.parametrize("r_new", [0, 9, -3])
def test_spawn_requirement_infeasible(r_new):
    with pytest.raises(InfeasibleRequirementError):
        on_spawn_requirement(SOLO, r_new, 8)


def test_acquire_and_release():
    reg = RegistrationWord(4, 2, 1, 0)
    assert try_acquire_delta(reg, +1) == RegistrationWord(4, 3, 1, 0)
    assert try_acquire_delta(reg, -1) == RegistrationWord(4, 1, 1, 0)


def test_release_below_team_is_illegal():
    # a thread locked into the team cannot drop out
    with pytest.raises(IllegalDeregistrationError):
        try_acquire_delta(RegistrationWord(4, 2, 2, 0), -1)


def test_fix_team():
    assert fix_team(RegistrationWord(4, 4, 1, 7)) == RegistrationWord(4, 4, 4, 7)
    with pytest.raises(NotReadyError):
        fix_team(RegistrationWord(4, 3, 1, 7))


def test_reset_to_solo():
    assert reset_to_solo(RegistrationWord(4, 4, 4, 3)) == RegistrationWord(1, 1, 1, 4)


@given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 8),
       st.integers(0, 3), st.integers(1, 8))
def test_spawn_requirement_invariants(r, a, t, n, r_new):
    # reachable words have t <= a and t <= r
    t = min(t, r, a)
    reg = RegistrationWord(r, a, t, n)
    out = on_spawn_requirement(reg, r_new, 8)
    assert out.r >= out.t
    assert out.t == reg.t
    # epoch moves only when the requirement shrinks
    assert (out.n != reg.n) == (r_new < reg.r)


class TestAtomicWord:
    def test_cas_success_and_failure(self):
        cell = AtomicWord(pack(*SOLO))
        ok = cell.compare_exchange(pack(*SOLO), pack(2, 1, 1, 0))
        assert ok and unpack(cell.load()) == (2, 1, 1, 0)
        assert not cell.compare_exchange(pack(*SOLO), pack(3, 1, 1, 0))
        assert unpack(cell.load()) == (2, 1, 1, 0)

    def test_counter_counts_attempts(self):
        hits = []
        cell = AtomicWord(0, counter=lambda: hits.append(1))
        cell.compare_exchange(0, 1)
        cell.compare_exchange(0, 2)   # fails, still an attempt
        cell.load()
        cell.store(5)
        assert len(hits) == 2

    def test_concurrent_increments_all_land(self):
        cell = AtomicWord(pack(0, 0, 0, 0))

        def bump():
            for _ in range(500):
                while True:
                    cur = cell.load()
                    reg = unpack(cur)
                    if cell.compare_exchange(cur, pack(reg.r + 1, 0, 0, 0)):
                        break

        threads = [threading.Thread(target=bump) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert unpack(cell.load()).r == 2000
