import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swarmfl.channel import ComputeParams
from swarmfl.lyapunov import (VirtualQueueState, drift_bound_constant, dpp_objective,
                              queue_update, theorem3_check, utility)
from swarmfl.oracles import queue_fold
from swarmfl.association import association_matrix
from swarmfl.sim.instances import random_compute


def _state(q, budget=0.5, v=1.0):
    q = np.atleast_1d(np.asarray(q, float))
    return VirtualQueueState(q, np.full(q.shape, budget), 100, v)


def test_exact_budget_keeps_queue_empty():
    s = queue_update(_state([0.0, 0.0]), [0.5, 0.5])
    assert np.array_equal(s.q, [0.0, 0.0])


def test_queue_substitution():
    assert queue_update(_state([1.0]), [2.0]).q[0] == 2.5


def test_queue_trajectory_matches_scalar_fold(rng):
    energies = rng.uniform(0, 1.2, (100, 6))
    s = VirtualQueueState.empty(6, 40.0, 100, 1.0)
    for row in energies:
        s = queue_update(s, row)
    assert np.array_equal(s.q, queue_fold(energies, 0.4))


def test_negative_energy_rejected():
    with pytest.raises(ValueError):
        queue_update(_state([0.0]), [-1e-9])


@pytest.mark.parametrize("kw", [dict(q=[-1.0]), dict(q=[0.0], budget=0.0), dict(q=[0.0], v=0.0)])
def test_state_invariants(kw):
    with pytest.raises(ValueError):
        _state(**kw)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.floats(0, 5), min_size=3, max_size=3), min_size=1, max_size=40))
def test_queue_nonnegative_and_telescopes(rows):
    energies = np.array(rows)
    s = VirtualQueueState.empty(3, 1.0, len(rows), 1.0)
    for row in energies:
        s = queue_update(s, row)
        assert np.all(s.q >= 0)
    assert np.all(s.q >= energies.sum(axis=0) - len(rows) * s.e_budget_per_round - 1e-9)


def test_dpp_zero_queue_is_pure_utility(rng):
    beta = association_matrix([0, 1, 1, 2], 3)
    alpha, d = rng.dirichlet(np.ones(3)), rng.uniform(100, 900, 4)
    s = _state(np.zeros(4), v=3.0)
    got = dpp_objective(s, rng.uniform(0, 1, 4), alpha, beta, d)
    assert got == pytest.approx(-3.0 * utility(alpha, beta, d), rel=1e-12)


def test_dpp_vanishing_v_is_pure_energy(rng):
    # V must be positive, so the V = 0 case is taken as a limit
    q, e = rng.uniform(0, 5, 4), rng.uniform(0, 1, 4)
    beta = association_matrix([0, 0, 1, 1], 2)
    got = dpp_objective(_state(q, v=1e-300), e, [0.5, 0.5], beta, np.full(4, 500.0))
    assert got == pytest.approx(float(q @ e), rel=1e-12)


def test_dpp_matches_naive_sum(rng):
    for _ in range(20):
        n, m = int(rng.integers(1, 8)), int(rng.integers(1, 4))
        tasks = rng.integers(0, m, n)
        beta = association_matrix(tasks, m)
        q, e = rng.uniform(0, 5, n), rng.uniform(0, 1, n)
        alpha, d, v = rng.dirichlet(np.ones(m)), rng.uniform(1, 1000, n), rng.uniform(0.01, 100)
        naive = sum(q[k] * e[k] for k in range(n))
        naive -= v * sum(alpha[j] * beta[j, k] * d[k] for j in range(m) for k in range(n))
        got = dpp_objective(_state(q, v=v), e, alpha, beta, d)
        assert abs(got - naive) <= 1e-12 * max(1.0, abs(naive))


def _compute(n, m, cycles=1e3, deadline=1.0):
    return ComputeParams(np.full((m, n), cycles), 1, 1, 1e-28, np.full(n, 1e9), np.full(n, 1e-3),
                         np.full(m, 1e6), deadline)


def test_drift_constant_single_uav_budget_dominates():
    c = _compute(1, 1)
    cap = 1e-3 * 1.0 + 1e-28 * 1e3 * 1e18
    assert cap < 5.0
    assert drift_bound_constant(c, 5.0) == pytest.approx(12.5, rel=1e-15)


def test_drift_constant_linear_in_n():
    b = [drift_bound_constant(_compute(n, 2), 0.01) for n in (1, 2, 5, 10)]
    assert np.allclose(np.array(b) / np.array([1, 2, 5, 10]), b[0], rtol=1e-14)


def test_drift_constant_matches_brute_force(rng):
    for _ in range(10):
        n, m = int(rng.integers(1, 8)), int(rng.integers(1, 4))
        c = random_compute(rng, n, m)
        budget = rng.uniform(0.1, 2.0, n)
        worst = 0.0
        for u in range(n):
            comp = max(c.energy_coeff * c.local_iters * c.batch_size * c.cycles_per_sample[t, u]
                       * c.f_max[u] ** 2 for t in range(m))
            worst = max(worst, c.p_max[u] * c.round_deadline + comp)
        expect = n / 2 * max(max(b * b for b in budget), worst ** 2)
        assert drift_bound_constant(c, budget) == pytest.approx(expect, rel=1e-12)


def test_theorem3_zero_energy_run():
    d = theorem3_check(np.zeros((50, 4)), 0.4, 10.0, 3.0, np.full(50, 100.0))
    assert d.lhs_energy_avg == 0.0 and d.holds and d.drift_bound_const == 3.0


def test_theorem3_small_v_limit():
    t, b = 10_000, 7.0
    d = theorem3_check(np.ones((t, 2)), [0.3, 0.5], 1e-12, b, np.full(t, 1e3))
    assert d.rhs_bound == pytest.approx(0.8 + math.sqrt(2 * b / t), rel=1e-9)
    assert not d.holds


def test_theorem3_empty_history():
    d = theorem3_check(np.zeros((0, 3)), 0.4, 1.0, 1.0, [])
    assert d.lhs_energy_avg == 0.0 and d.rhs_bound == pytest.approx(1.2)
