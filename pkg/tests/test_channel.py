import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swarmfl.channel import (ChannelParams, ComputeParams, DomainError, Geometry, channel_gain,
                             channel_gains, los_probability, round_costs, uplink_rate)

CH = ChannelParams()


def _compute(n_uav=3, n_tasks=2, **kw):
    base = dict(cycles_per_sample=np.full((n_tasks, n_uav), 1e7), local_iters=5, batch_size=64,
                energy_coeff=1e-28, f_max=2e9, p_max=0.2, payload_bits=np.full(n_tasks, 4e6),
                round_deadline=3.0)
    base.update(kw)
    return ComputeParams(**base)


def test_los_at_theta_equal_a_is_reciprocal():
    assert los_probability(CH.a_env, CH) == pytest.approx(1 / (1 + CH.a_env), abs=1e-15)


def test_los_approaches_one_for_steep_logistic():
    steep = ChannelParams(b_env=5.0)
    assert los_probability(90.0, steep) > 1 - 1e-12


def test_los_matches_high_precision_reference():
    import mpmath
    mpmath.mp.dps = 40
    ref = 1 / (1 + mpmath.mpf("9.61") * mpmath.exp(-mpmath.mpf("0.16") * (45 - mpmath.mpf("9.61"))))
    assert abs(los_probability(45.0, CH) - float(ref)) <= 1e-12


@pytest.mark.parametrize("theta", [0.0, -3.0, 90.5, float("nan")])
def test_los_rejects_angles_outside_domain(theta):
    with pytest.raises(DomainError):
        los_probability(theta, CH)


@given(st.floats(0.01, 89.0), st.floats(0.001, 1.0))
def test_los_strictly_increasing(theta, dt):
    assert los_probability(theta + dt, CH) > los_probability(theta, CH)


def test_overhead_uav_gain():
    geom = Geometry([[10.0, 20.0]], [[10.0, 20.0]], [120.0])
    p = los_probability(90.0, CH)
    expect = (p + CH.mu_nlos * (1 - p)) * CH.alpha0 * 120.0 ** -CH.nu
    assert channel_gain(0, 0, geom, CH) == pytest.approx(expect, rel=1e-14)


def test_unit_nlos_factor_removes_angle_dependence():
    ch = ChannelParams(mu_nlos=1.0)
    geom = Geometry([[0.0, 0.0]], [[300.0, 400.0]], [100.0])
    d = math.sqrt(500.0 ** 2 + 100.0 ** 2)
    assert channel_gain(0, 0, geom, ch) == pytest.approx(ch.alpha0 * d ** -ch.nu, rel=1e-14)


def test_gain_matrix_matches_scalar_reimplementation():
    rng = np.random.default_rng(3)
    geom = Geometry(rng.uniform(0, 800, (5, 2)), rng.uniform(0, 800, (3, 2)),
                    rng.uniform(100, 150, 5))
    g = channel_gains(geom, CH)
    for m in range(3):
        for n in range(5):
            dx, dy = geom.uav_xy[n] - geom.ev_xy[m]
            d = math.sqrt(dx * dx + dy * dy + geom.altitude[n] ** 2)
            theta = math.degrees(math.asin(geom.altitude[n] / d))
            p = 1 / (1 + CH.a_env * math.exp(-CH.b_env * (theta - CH.a_env)))
            ref = (p + CH.mu_nlos * (1 - p)) * CH.alpha0 * d ** -CH.nu
            assert g[m, n] == pytest.approx(ref, rel=1e-12)
            assert channel_gain(n, m, geom, CH) == pytest.approx(ref, rel=1e-12)


@given(st.floats(1.0, 500.0), st.floats(1.0, 500.0), st.floats(50.0, 200.0))
def test_gain_non_increasing_in_distance_at_fixed_angle(x, extra, alt):
    # scale the whole geometry so the elevation angle is unchanged
    k = 1.0 + extra / 100.0
    near = Geometry([[x, 0.0]], [[0.0, 0.0]], [alt])
    far = Geometry([[k * x, 0.0]], [[0.0, 0.0]], [k * alt])
    assert channel_gain(0, 0, far, CH) <= channel_gain(0, 0, near, CH)


def test_rate_zero_power():
    assert uplink_rate(0.0, 1e-7, 0.3, CH) == 0.0


def test_rate_reference_value():
    n0 = 10 ** -17.4 * 1e-3
    ch = ChannelParams(noise_psd=n0)
    expect = 0.1 * 10e6 * math.log2(1 + 0.1 * 1e-7 / (0.1 * 10e6 * n0))
    assert uplink_rate(0.1, 1e-7, 0.1, ch) == pytest.approx(expect, rel=1e-9)


def test_share_scaling_in_low_and_high_snr_regimes():
    r1 = uplink_rate(1e-9, 1e-10, 0.2, CH)
    r2 = uplink_rate(1e-9, 1e-10, 0.4, CH)
    assert r2 / r1 == pytest.approx(1.0, rel=1e-3)  # low SNR: rate ~ p h / (N0 ln 2), share-free
    hi1 = uplink_rate(0.2, 1e-6, 0.2, CH)
    hi2 = uplink_rate(0.2, 1e-6, 0.4, CH)
    assert 1.8 < hi2 / hi1 < 2.0


def test_rate_rejects_nonpositive_share():
    with pytest.raises(DomainError):
        uplink_rate(0.1, 1e-7, 0.0, CH)


def test_rate_concave_in_share():
    g = np.linspace(0.01, 1.0, 400)
    r = uplink_rate(0.1, 1e-9, g, CH)
    assert np.all(np.diff(r, 2) < 0)


@given(st.floats(1e-3, 0.2), st.floats(1e-3, 0.2), st.floats(0.01, 1.0))
def test_rate_increasing_in_power(p1, p2, gamma):
    lo, hi = sorted((p1, p2))
    if hi > lo:
        assert uplink_rate(hi, 1e-9, gamma, CH) > uplink_rate(lo, 1e-9, gamma, CH)


def test_round_costs_composition():
    rng = np.random.default_rng(7)
    compute = _compute(4, 2, cycles_per_sample=rng.uniform(5e6, 1e7, (2, 4)),
                       payload_bits=np.array([3e6, 5e6]))
    gains = rng.uniform(1e-10, 1e-9, (2, 4))
    tasks = np.array([0, 1, 1, 0])
    p = rng.uniform(0.05, 0.2, 4)
    f = rng.uniform(1e9, 2e9, 4)
    gamma = np.array([0.1, 0.2, 0.3, 0.4])
    c = round_costs(tasks, p, f, gamma, gains, compute, CH)
    for n in range(4):
        cycles = 5 * 64 * compute.cycles_per_sample[tasks[n], n]
        rate = gamma[n] * CH.bandwidth_total * math.log2(
            1 + p[n] * gains[tasks[n], n] / (gamma[n] * CH.bandwidth_total * CH.noise_psd))
        t_comm = compute.payload_bits[tasks[n]] / rate
        assert c.t_comp[n] == pytest.approx(cycles / f[n], rel=1e-9)
        assert c.e_comp[n] == pytest.approx(1e-28 * cycles * f[n] ** 2, rel=1e-9)
        assert c.t_comm[n] == pytest.approx(t_comm, rel=1e-9)
        assert c.e_comm[n] == pytest.approx(p[n] * t_comm, rel=1e-9)


def test_round_costs_frequency_square_law_and_purity():
    compute = _compute(1, 1)
    gains = np.array([[1e-9]])
    a = round_costs([0], [0.1], [1e9], [1.0], gains, compute, CH)
    b = round_costs([0], [0.1], [2e9], [1.0], gains, compute, CH)
    assert b.e_comp[0] == pytest.approx(4 * a.e_comp[0], rel=1e-12)
    again = round_costs([0], [0.1], [1e9], [1.0], gains, compute, CH)
    assert again.energy.tobytes() == a.energy.tobytes()


def test_round_costs_flags_deadline_miss_without_raising():
    compute = _compute(1, 1, round_deadline=0.1)
    c = round_costs([0], [0.1], [1e9], [1.0], np.array([[1e-9]]), compute, CH)
    assert not c.feasible[0]


def test_full_batch_uses_shard_size():
    compute = _compute(2, 1, full_batch=True, data_sizes=[100, 300])
    assert compute.workload(0, 1) == 5 * 300 * 1e7


def test_params_validation():
    with pytest.raises(ValueError):
        ChannelParams(mu_nlos=0.0)
    with pytest.raises(ValueError):
        _compute(p_max=0.0)
    with pytest.raises(ValueError):
        Geometry([[0, 0]], [[0, 0]], [0.0])


@settings(max_examples=30)
@given(st.floats(1e-3, 0.2), st.floats(0.05, 1.0))
def test_comm_energy_eventually_increasing_in_power(p, gamma):
    # e_comm(p) = p Z / r(p); beyond the interior optimum larger p costs more
    h, z = 1e-9, 4e6
    ps = np.linspace(p, 50.0, 200)
    e = ps * z / uplink_rate(ps, h, gamma, CH)
    assert e[-1] > e[-2]
