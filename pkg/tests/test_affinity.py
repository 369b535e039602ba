import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swarmfl.affinity import AffinityState, affinity_round, update_share_sets


def _quadratic(targets):
    return [lambda w, t=t: float(np.sum((w - t) ** 2)) for t in targets]


def test_self_affinity_is_zero(rng):
    r = affinity_round(rng.normal(size=(3, 4)), rng.normal(size=(3, 4)), [1.0, 2.0, 3.0],
                       _quadratic(rng.normal(size=(3, 4))), 0.1)
    assert np.all(np.diag(r.theta) == 0.0)


def test_zero_gradient_with_no_data_weight(rng):
    w = rng.normal(size=(2, 4))
    g = np.vstack([np.zeros(4), rng.normal(size=4)])
    r = affinity_round(w, g, [0.0, 50.0], _quadratic(rng.normal(size=(2, 4))), 0.1)
    assert r.theta[0, 1] == 0.0


def test_quadratic_sign_matches_alignment(rng):
    # L_1(w) = |w - w*|^2 with G_1 = 0; mixing G_0 moves w_1 by -lr*G_0/2
    w = np.zeros((2, 3))
    target = np.array([1.0, -2.0, 0.5])
    losses = _quadratic([np.zeros(3), target])
    for sign in (1.0, -1.0):
        g0 = -sign * 0.1 * target
        r = affinity_round(w, np.vstack([g0, np.zeros(3)]), [1.0, 1.0], losses, 0.5)
        predicted = np.sign(np.dot(-g0, target - w[1]))
        assert np.sign(r.theta[0, 1]) == predicted == sign


def test_quadratic_closed_form(rng):
    w = rng.normal(size=(2, 3))
    g = rng.normal(size=(2, 3))
    targets = rng.normal(size=(2, 3))
    d, lr = np.array([3.0, 1.0]), 0.2
    r = affinity_round(w, g, d, _quadratic(targets), lr)
    ref = np.sum((w[1] - lr * g[1] - targets[1]) ** 2)
    mixed = (3 * g[0] + g[1]) / 4
    both = np.sum((w[1] - lr * mixed - targets[1]) ** 2)
    assert r.theta[0, 1] == pytest.approx(1 - both / ref, rel=1e-12)


def test_tiny_reference_loss_is_guarded():
    w = np.zeros((2, 2))
    losses = [lambda x: 1.0, lambda x: 0.0]
    r = affinity_round(w, np.ones((2, 2)), [1, 1], losses, 0.1)
    assert r.guarded[0, 1] and not r.guarded[1, 0] and r.theta[0, 1] == 0.0
    assert not r.guarded[1, 1]


def test_all_negative_means_no_sharing():
    s = AffinityState(3, ell=0.0)
    sets = update_share_sets(s, -np.ones((3, 3)) + np.eye(3))
    assert sets == [[0], [1], [2]]


def test_all_positive_recovers_full_sharing():
    s = AffinityState(3, ell=0.0)
    assert update_share_sets(s, np.ones((3, 3))) == [[0, 1, 2]] * 3


def test_initial_sets_are_singletons():
    assert AffinityState(2).share_sets == [[0], [1]]
    with pytest.raises(ValueError):
        AffinityState(2, ell=-0.1)
    with pytest.raises(ValueError):
        update_share_sets(AffinityState(2), [[0, np.nan], [0, 0]])


def test_alternating_sequence_fold_and_flips():
    s = AffinityState(2, ell=0.8)
    u = 0.0
    seq = [1.0, -3.0, 2.0, 2.0, -5.0, -0.1, 4.0]
    for x in seq:
        theta = np.array([[0.0, x], [0.0, 0.0]])
        sets = update_share_sets(s, theta)
        u = 0.8 * u + 0.2 * x
        assert s.upsilon[0, 1] == pytest.approx(u, abs=1e-15)
        assert (0 in sets[1]) == (u > 0)
        assert sets[0] == [0]


def test_negative_affinity_exclusion_after_burn_in():
    s = AffinityState(2, ell=0.8)
    s.upsilon = np.array([[0.0, 1.0], [0.0, 0.0]])
    theta = np.array([[0.0, -0.5], [0.0, 0.0]])
    rounds = 0
    while 0 in update_share_sets(s, theta)[1]:
        rounds += 1
    assert rounds <= math.ceil(math.log(0.5 / 1.5) / math.log(0.8))
    for _ in range(50):
        assert update_share_sets(s, theta)[1] == [1]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
def test_share_sets_contain_self_and_ignore_pair_order(m, seed):
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=(m, m))
    a, b = AffinityState(m), AffinityState(m)
    sa = update_share_sets(a, theta)
    perm = rng.permutation(m)
    sb = update_share_sets(b, theta[np.ix_(perm, perm)])
    inv = np.argsort(perm)
    for t in range(m):
        assert t in sa[t]
        assert sorted(perm[i] for i in sb[inv[t]]) == sa[t]
