import pytest
from hypothesis import given, strategies as st

import oracles
from cvfrank.errors import CapacityError, InvalidInputError, PreconditionError
from cvfrank.ring import (
    Configuration,
    Move,
    SystemParams,
    apply_move,
    check_capacity,
    decode,
    encode,
    enumerate_states,
    is_invariant,
    privileged_nodes,
    successors,
)

P33 = SystemParams(3, 3)


@pytest.mark.parametrize("cfg,expected", [
    ((0, 0, 0), {0}),
    ((0, 1, 2), {1, 2}),
    ((1, 0, 0), {1}),
])
def test_privileged_nodes(cfg, expected):
    assert privileged_nodes(cfg, P33) == expected


@pytest.mark.parametrize("cfg", [(0, 0), (0, 0, 3), (0, -1, 0), "abc"])
def test_malformed_configuration(cfg):
    with pytest.raises(InvalidInputError):
        privileged_nodes(cfg, P33)


@pytest.mark.parametrize("n,k", [(1, 3), (3, 1), (2.5, 3)])
def test_bad_params(n, k):
    with pytest.raises(InvalidInputError):
        SystemParams(n, k)


@pytest.mark.parametrize("cfg,node,expected", [
    ((0, 0, 0), 0, (1, 0, 0)),
    ((2, 2, 2), 0, (0, 2, 2)),
    ((0, 1, 2), 1, (0, 0, 2)),
])
def test_apply_move(cfg, node, expected):
    assert apply_move(cfg, Move(node), P33) == Configuration(expected)


def test_apply_move_requires_privilege():
    with pytest.raises(PreconditionError):
        apply_move((0, 0, 0), Move(1), P33)


@pytest.mark.parametrize("cfg,expected", [
    ((0, 0, 0), [(0, (1, 0, 0))]),
    ((0, 1, 2), [(1, (0, 0, 2)), (2, (0, 1, 1))]),
    ((1, 1, 0), [(2, (1, 1, 1))]),
])
def test_successors(cfg, expected):
    got = [(m.node, c.values) for m, c in successors(cfg, P33)]
    assert got == expected


@pytest.mark.parametrize("cfg,expected", [((0, 0, 0), True), ((0, 1, 2), False), ((1, 0, 0), True)])
def test_is_invariant(cfg, expected):
    assert is_invariant(cfg, P33) is expected


def test_enumerate_order_and_count():
    states = [c.values for c in enumerate_states(SystemParams(2, 2))]
    assert states == [(0, 0), (1, 0), (0, 1), (1, 1)]
    assert sum(1 for _ in enumerate_states(P33)) == 27


def test_enumerate_capacity_error_before_work():
    with pytest.raises(CapacityError):
        enumerate_states(SystemParams(12, 12))
    with pytest.raises(CapacityError):
        check_capacity(SystemParams(40, 40), budget=None)


@pytest.mark.parametrize("n,k", [(2, 2), (3, 3), (4, 4), (5, 5)])
def test_invariant_count_matches_brute_force(n, k):
    params = SystemParams(n, k)
    got = sum(is_invariant(c, params) for c in enumerate_states(params))
    assert got == oracles.count_invariant(n, k)
    # exactly-one-privilege states: all-equal rings plus one boundary b^j a^(N-j)
    assert got == k + (n - 1) * k * (k - 1)


@pytest.mark.parametrize("n,k", [(n, k) for n in range(2, 6) for k in range(2, 6)])
def test_every_state_has_a_privilege(n, k):
    params = SystemParams(n, k)
    assert all(privileged_nodes(c, params) for c in enumerate_states(params))


@pytest.mark.parametrize("n,k", [(3, 3), (4, 4), (4, 5)])
def test_invariant_closed_under_moves(n, k):
    params = SystemParams(n, k)
    for c in enumerate_states(params):
        if is_invariant(c, params):
            succ = successors(c, params)
            assert len(succ) == 1
            assert is_invariant(succ[0][1], params)


@pytest.mark.parametrize("n,k", [(2, 2), (3, 3), (3, 4), (4, 3)])
def test_encode_decode_roundtrip(n, k):
    params = SystemParams(n, k)
    for i, c in enumerate(enumerate_states(params)):
        assert encode(c, params) == i
        assert decode(i, params) == c


@given(st.integers(2, 6).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.integers(0, 5), min_size=n, max_size=n))))
def test_successors_are_distinct_and_change_one_position(case):
    n, values = case
    params = SystemParams(n, 6)
    succ = successors(values, params)
    assert len(succ) == len(privileged_nodes(values, params))
    assert len({c for _, c in succ}) == len(succ)
    for move, c in succ:
        diff = [i for i in range(n) if c[i] != values[i]]
        assert diff == [move.node]
