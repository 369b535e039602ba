"""Air-to-ground channel, uplink rate and per-round time/energy model.

Everything here is SI: watts, hertz, joules, seconds, metres.  Conversions from
dBm / dB happen in :mod:`swarmfl.sim.config` and nowhere else.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LN2 = math.log(2.0)


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


@dataclass(frozen=True)
class ChannelParams:
    # alpha0, nu and mu_nlos are not given numerically in the source model;
    # the defaults are typical sub-6 GHz air-to-ground values.
    alpha0: float = 1e-5
    nu: float = 2.2
    mu_nlos: float = 0.2
    a_env: float = 9.61
    b_env: float = 0.16
    noise_psd: float = 10 ** (-174 / 10) * 1e-3  # -174 dBm/Hz
    bandwidth_total: float = 10e6

    def __post_init__(self):
        for name in ("alpha0", "nu", "a_env", "b_env", "noise_psd", "bandwidth_total"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not 0 < self.mu_nlos <= 1:
            raise ValueError(f"mu_nlos must lie in (0, 1], got {self.mu_nlos}")


@dataclass(frozen=True)
class Geometry:
    uav_xy: np.ndarray
    ev_xy: np.ndarray
    altitude: np.ndarray

    def __post_init__(self):
        uav = np.atleast_2d(np.asarray(self.uav_xy, dtype=float))
        ev = np.atleast_2d(np.asarray(self.ev_xy, dtype=float))
        alt = np.broadcast_to(np.asarray(self.altitude, dtype=float), (uav.shape[0],)).copy()
        if uav.shape[1] != 2 or ev.shape[1] != 2:
            raise ValueError("coordinates must have shape (count, 2)")
        if not (np.all(np.isfinite(uav)) and np.all(np.isfinite(ev))):
            raise ValueError("coordinates must be finite")
        if np.any(alt <= 0):
            raise ValueError("altitude must be positive")
        object.__setattr__(self, "uav_xy", uav)
        object.__setattr__(self, "ev_xy", ev)
        object.__setattr__(self, "altitude", alt)

    @property
    def n_uav(self) -> int:
        return self.uav_xy.shape[0]

    @property
    def n_ev(self) -> int:
        return self.ev_xy.shape[0]

    def distance(self, uav: int, ev: int) -> float:
        dx, dy = self.uav_xy[uav] - self.ev_xy[ev]
        return math.sqrt(dx * dx + dy * dy + self.altitude[uav] ** 2)

    def elevation_deg(self, uav: int, ev: int) -> float:
        d = self.distance(uav, ev)
        return math.degrees(math.asin(min(1.0, self.altitude[uav] / d)))


@dataclass(frozen=True)
class ComputeParams:
    """Per-UAV compute and per-task payload description.

    ``cycles_per_sample`` has shape (M, N): CPU cycles UAV n spends per sample
    when training task m.  With ``full_batch`` the samples processed per local
    iteration are the UAV's whole shard (``data_sizes``) instead of one batch.
    """

    cycles_per_sample: np.ndarray
    local_iters: int
    batch_size: int
    energy_coeff: float
    f_max: np.ndarray
    p_max: np.ndarray
    payload_bits: np.ndarray
    round_deadline: float
    full_batch: bool = False
    data_sizes: np.ndarray | None = field(default=None)

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.cycles_per_sample, dtype=float))
        m, n = c.shape
        f_max = np.broadcast_to(np.asarray(self.f_max, dtype=float), (n,)).copy()
        p_max = np.broadcast_to(np.asarray(self.p_max, dtype=float), (n,)).copy()
        z = np.broadcast_to(np.asarray(self.payload_bits, dtype=float), (m,)).copy()
        for name, arr in (("cycles_per_sample", c), ("f_max", f_max), ("p_max", p_max),
                          ("payload_bits", z)):
            if not (np.all(arr > 0) and np.all(np.isfinite(arr))):
                raise ValueError(f"{name} must be strictly positive and finite")
        if self.local_iters < 0 or self.batch_size <= 0:
            raise ValueError("local_iters must be >= 0 and batch_size > 0")
        if not (self.energy_coeff > 0 and self.round_deadline > 0):
            raise ValueError("energy_coeff and round_deadline must be positive")
        object.__setattr__(self, "cycles_per_sample", c)
        object.__setattr__(self, "f_max", f_max)
        object.__setattr__(self, "p_max", p_max)
        object.__setattr__(self, "payload_bits", z)
        if self.full_batch:
            if self.data_sizes is None:
                raise ValueError("full_batch requires data_sizes")
            object.__setattr__(self, "data_sizes",
                               np.broadcast_to(np.asarray(self.data_sizes, float), (n,)).copy())

    @property
    def n_tasks(self) -> int:
        return self.cycles_per_sample.shape[0]

    @property
    def n_uav(self) -> int:
        return self.cycles_per_sample.shape[1]

    def workload(self, task, uav):
        """Cycles needed for one round of local training (K * samples * C)."""
        task = np.asarray(task)
        uav = np.asarray(uav)
        samples = self.data_sizes[uav] if self.full_batch else self.batch_size
        return self.local_iters * samples * self.cycles_per_sample[task, uav]


@dataclass
class CostBreakdown:
    t_comp: np.ndarray
    t_comm: np.ndarray
    e_comp: np.ndarray
    e_comm: np.ndarray
    feasible: np.ndarray

    @property
    def energy(self) -> np.ndarray:
        return self.e_comp + self.e_comm

    @property
    def latency(self) -> np.ndarray:
        return self.t_comp + self.t_comm


def los_probability(theta_deg, params: ChannelParams):
    """Probability of a line-of-sight link at elevation ``theta_deg`` (degrees)."""
    theta = np.asarray(theta_deg, dtype=float)
    if np.any(~(theta > 0)) or np.any(theta > 90):
        raise DomainError("elevation angle must lie in (0, 90] degrees")
    out = 1.0 / (1.0 + params.a_env * np.exp(-params.b_env * (theta - params.a_env)))
    return float(out) if out.ndim == 0 else out


def channel_gain(uav: int, ev: int, geom: Geometry, params: ChannelParams) -> float:
    """Average power gain between UAV ``uav`` and EV ``ev`` (LoS/NLoS mixture)."""
    if not (0 <= uav < geom.n_uav and 0 <= ev < geom.n_ev):
        raise IndexError(f"uav {uav} / ev {ev} out of range")
    d = geom.distance(uav, ev)
    p_los = los_probability(geom.elevation_deg(uav, ev), params)
    return (p_los + params.mu_nlos * (1.0 - p_los)) * params.alpha0 * d ** (-params.nu)


def channel_gains(geom: Geometry, params: ChannelParams) -> np.ndarray:
    """Gain matrix of shape (M, N), row m = EV m, column n = UAV n."""
    diff = geom.uav_xy[None, :, :] - geom.ev_xy[:, None, :]
    d = np.sqrt(np.sum(diff ** 2, axis=-1) + geom.altitude[None, :] ** 2)
    theta = np.degrees(np.arcsin(np.minimum(1.0, geom.altitude[None, :] / d)))
    p_los = los_probability(theta, params)
    return (p_los + params.mu_nlos * (1.0 - p_los)) * params.alpha0 * d ** (-params.nu)


def uplink_rate(p, h, gamma, params: ChannelParams):
    """FDMA Shannon rate in bit/s for power ``p``, gain ``h`` and share ``gamma``."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise DomainError("bandwidth share must be positive")
    bw = gamma * params.bandwidth_total
    snr = np.asarray(p, dtype=float) * h / (bw * params.noise_psd)
    out = bw * np.log1p(snr) / LN2
    return float(out) if np.ndim(out) == 0 else out


def round_costs(tasks, p, f, gamma, gains: np.ndarray, compute: ComputeParams,
                channel: ChannelParams) -> CostBreakdown:
    """Computation/communication time and energy for one round's decision.

    Parameters
    ----------
    tasks : array of int, shape (N,)
        Task (EV) each UAV is associated with.
    p, f, gamma : arrays, shape (N,)
        Transmit power (W), CPU frequency (Hz) and bandwidth share.
    gains : array, shape (M, N)
        Channel gains from :func:`channel_gains`.

    Returns
    -------
    CostBreakdown
        Per-UAV costs; ``feasible`` flags UAVs meeting the round deadline.
        A zero-power UAV gets ``t_comm = inf``.
    """
    tasks = np.asarray(tasks, dtype=int)
    uav = np.arange(tasks.size)
    p = np.asarray(p, dtype=float)
    f = np.asarray(f, dtype=float)
    if np.any(p < 0) or np.any(p > compute.p_max * (1 + 1e-12)):
        raise ValueError("power outside [0, p_max]")
    if np.any(f <= 0) or np.any(f > compute.f_max * (1 + 1e-12)):
        raise ValueError("frequency outside (0, f_max]")
    cycles = compute.workload(tasks, uav)
    t_comp = cycles / f
    e_comp = compute.energy_coeff * cycles * f ** 2
    rate = np.asarray(uplink_rate(p, gains[tasks, uav], gamma, channel), dtype=float)
    with np.errstate(divide="ignore"):
        t_comm = np.where(rate > 0, compute.payload_bits[tasks] / np.where(rate > 0, rate, 1.0),
                          np.inf)
    e_comm = np.where(p > 0, p * t_comm, 0.0)
    feasible = t_comp + t_comm <= compute.round_deadline * (1 + 1e-9)
    return CostBreakdown(t_comp, t_comm, e_comp, e_comm, feasible)
