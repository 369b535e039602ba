import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swarmfl import association as assoc
from swarmfl.association import (AssociationInfeasible, UtilityTable, delta_repair,
                                 evaluate_assignment, exhaustive_assign, feasible_associations,
                                 two_stage_assign, utility_table)
from swarmfl.channel import ChannelParams, ComputeParams
from swarmfl.lyapunov import VirtualQueueState
from swarmfl.resource import P3Instance, optimal_power
from swarmfl.sim.instances import random_association


def _args(inst):
    return inst.state, inst.alpha, inst.gains, inst.compute, inst.channel, inst.data_sizes


def _table(j):
    j = np.asarray(j, float)
    return UtilityTable(j, np.zeros_like(j))


def test_zero_queue_prefers_most_important_task(rng):
    inst = random_association(rng, 4, 3)
    state = VirtualQueueState(np.zeros(4), inst.state.e_budget_per_round, 100, 2.0)
    alpha = np.array([0.2, 0.5, 0.3])
    tab = utility_table(state, alpha, inst.gains, inst.compute, inst.channel, inst.data_sizes)
    assert np.allclose(tab.j, -2.0 * alpha[None, :] * inst.data_sizes[:, None], rtol=1e-15)
    assert np.all(np.argmin(tab.j, axis=1) == 1)


def test_equal_weights_pick_cheapest_pairing(rng):
    inst = random_association(rng, 5, 3)
    state = VirtualQueueState(rng.uniform(1, 5, 5), inst.state.e_budget_per_round, 100, 1.0)
    tab = utility_table(state, np.full(3, 1 / 3), inst.gains, inst.compute, inst.channel,
                        inst.data_sizes)
    assert np.array_equal(np.argmin(tab.j, axis=1), np.argmin(tab.energy, axis=1))


def test_table_recomposes_from_components(rng):
    inst = random_association(rng, 3, 2)
    tab = utility_table(*_args(inst))
    for m in range(2):
        p3 = P3Instance.from_assignment(np.full(3, m), inst.gains, inst.compute, inst.channel,
                                        np.zeros(3))
        for n in range(3):
            e = optimal_power(p3, n, 1 / 3).energy
            expect = inst.state.q[n] * e - inst.state.v_param * inst.alpha[m] * inst.data_sizes[n]
            assert abs(tab.j[n, m] - expect) <= 1e-12 * max(1.0, abs(expect))


def test_single_uav_single_task():
    a = two_stage_assign(_table([[3.0]]), [1])
    assert a.beta.tolist() == [[1]]


def test_no_minimums_is_row_argmin(rng):
    j = rng.normal(size=(7, 3))
    assert np.array_equal(two_stage_assign(_table(j), [0, 0, 0]).tasks, np.argmin(j, axis=1))


def test_zero_queue_override_and_tie():
    j = np.array([[-1.0, -1.0, 5.0], [0.0, 2.0, 1.0]])
    a = two_stage_assign(_table(j), [0, 0, 0], q=[0.0, 1.0], alpha=[0.4, 0.4, 0.2])
    assert a.tasks.tolist() == [0, 0]


def test_two_stage_feasible_and_no_better_than_exhaustive(rng):
    for _ in range(5):
        inst = random_association(rng, 5, 2)
        delta = [2, 2]
        ts = two_stage_assign(utility_table(*_args(inst)), delta, inst.state.q, inst.alpha)
        assert np.all(np.bincount(ts.tasks, minlength=2) >= 2)
        assert ts.beta.sum(axis=0).tolist() == [1] * 5
        ev = evaluate_assignment(ts.tasks, *_args(inst))
        ex = exhaustive_assign(*_args(inst), delta)
        assert ev.objective - ex.objective >= 0


def test_exhaustive_beats_two_stage_n4(rng):
    inst = random_association(rng, 4, 2)
    ts = two_stage_assign(utility_table(*_args(inst)), inst.delta, inst.state.q, inst.alpha)
    ex = exhaustive_assign(*_args(inst), inst.delta)
    assert ex.objective <= evaluate_assignment(ts.tasks, *_args(inst)).objective


def test_two_feasible_candidates_for_two_by_two():
    assert list(feasible_associations(2, 2, [1, 1])) == [(0, 1), (1, 0)]


def test_exhaustive_matches_unpruned_enumeration(rng, monkeypatch):
    inst = random_association(rng, 4, 2)
    best = min((evaluate_assignment(t, *_args(inst)) for t in
                itertools.product(range(2), repeat=4)
                if min(np.bincount(t, minlength=2)) >= 1), key=lambda e: e.objective)
    calls = []
    real = assoc.evaluate_assignment
    monkeypatch.setattr(assoc, "evaluate_assignment", lambda *a: calls.append(1) or real(*a))
    got = exhaustive_assign(*_args(inst), [1, 1])
    assert got.objective == best.objective
    assert 1 <= len(calls) <= 14


def _symmetric():
    channel = ChannelParams()
    compute = ComputeParams(np.full((2, 2), 5e6), 5, 64, 1e-28, 2e9, 0.2, 4e6, 3.0)
    gains = np.full((2, 2), 1e-10)
    state = VirtualQueueState(np.full(2, 2.0), np.full(2, 0.4), 100, 1.0)
    return state, np.full(2, 0.5), gains, compute, channel, np.full(2, 300.0)


def test_symmetric_tie_returns_lexicographic_first():
    args = _symmetric()
    a = evaluate_assignment((0, 1), *args).objective
    b = evaluate_assignment((1, 0), *args).objective
    assert a == b
    assert exhaustive_assign(*args, [1, 1]).tasks.tolist() == [0, 1]


def test_exhaustive_size_guard(rng):
    inst = random_association(rng, 13, 3)
    with pytest.raises(ValueError):
        exhaustive_assign(*_args(inst), inst.delta)


def test_assignment_is_deterministic(rng):
    inst = random_association(rng, 6, 3)
    runs = [two_stage_assign(utility_table(*_args(inst)), inst.delta, inst.state.q, inst.alpha)
            for _ in range(3)]
    assert all(np.array_equal(r.tasks, runs[0].tasks) for r in runs)


def test_repair_prefers_smallest_transfer_loss():
    j = np.array([[0.0, 5.0], [0.0, 1.0], [0.0, 1.0]])
    a = delta_repair([0, 0, 0], j, [1, 1])
    assert a.tasks.tolist() == [0, 1, 0] and a.moves == 1


def test_repair_infeasible_cases():
    with pytest.raises(AssociationInfeasible):
        delta_repair([0, 0], np.zeros((2, 3)), [1, 1, 1])
    with pytest.raises(AssociationInfeasible):
        delta_repair([0, 0], np.array([[0.0, np.inf], [0.0, np.inf]]), [0, 1])
    with pytest.raises(AssociationInfeasible):
        two_stage_assign(_table([[np.inf, np.inf]]), [0, 0])


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 9), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_repair_moves_equal_initial_deficit(n, m, seed):
    rng = np.random.default_rng(seed)
    cost = rng.normal(size=(n, m))
    delta = np.zeros(m, dtype=int)
    for _ in range(int(rng.integers(0, n + 1))):
        delta[rng.integers(0, m)] += 1
    start = np.argmin(cost, axis=1)
    deficit = int(np.maximum(delta - np.bincount(start, minlength=m), 0).sum())
    a = delta_repair(start, cost, delta)
    # every move lowers the deficit by one, so the count is exact and bounded by N
    assert a.moves == deficit <= n
    assert np.all(np.bincount(a.tasks, minlength=m) >= delta)
    assert a.beta.sum(axis=0).tolist() == [1] * n
