"""Per-round power, frequency and bandwidth allocation for a fixed association.

The inner problem minimises the queue-weighted energy ``sum_n Q_n E_n`` subject
to the round deadline, ``sum(gamma) == 1`` and the power/frequency caps.

* :func:`optimal_power` / :func:`optimal_frequency` give the per-UAV optimum for
  a fixed bandwidth share (the energy is strictly convex in the upload time).
* :func:`bandwidth_allocate` is the sum-rate KKT allocation with a Lambert-W
  interior solution and bisection on the sum multiplier.
* :func:`bcd_solve` alternates the two blocks until the objective settles.

Infeasibility is reported through ``feasible`` flags, never raised, so callers
that price associations can treat it as an infinite cost.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .channel import LN2, ChannelParams, ComputeParams
from .lambertw import lambert_w0

log = logging.getLogger(__name__)



@dataclass(frozen=True)
class P3Instance:
    """Everything the inner problem needs once the association is fixed."""

    workload: np.ndarray  # cycles per round, K * samples * C
    payload: np.ndarray  # bits
    gain: np.ndarray
    p_max: np.ndarray
    f_max: np.ndarray
    q: np.ndarray
    bandwidth: float
    noise_psd: float
    deadline: float
    energy_coeff: float

    @classmethod
    def from_assignment(cls, tasks, gains, compute: ComputeParams, channel: ChannelParams, q):
        tasks = np.asarray(tasks, dtype=int)
        uav = np.arange(tasks.size)
        return cls(
            workload=np.asarray(compute.workload(tasks, uav), dtype=float),
            payload=compute.payload_bits[tasks].astype(float),
            gain=np.asarray(gains, dtype=float)[tasks, uav],
            p_max=compute.p_max.copy(),
            f_max=compute.f_max.copy(),
            q=np.asarray(q, dtype=float).copy(),
            bandwidth=channel.bandwidth_total,
            noise_psd=channel.noise_psd,
            deadline=compute.round_deadline,
            energy_coeff=compute.energy_coeff,
        )

    @property
    def n(self) -> int:
        return self.workload.size

    def t_comm_budget(self, n=None):
        """Longest upload time that still leaves room for compute at f_max."""
        if n is None:
            return self.deadline - self.workload / self.f_max
        return self.deadline - self.workload[n] / self.f_max[n]

    def rate(self, p, gamma):
        bw = np.asarray(gamma, dtype=float) * self.bandwidth
        return bw * np.log1p(np.asarray(p) * self.gain / (bw * self.noise_psd)) / LN2

    def energy(self, p, f, gamma):
        p = np.asarray(p, dtype=float)
        return (self.energy_coeff * self.workload * np.asarray(f) ** 2
                + p * self.payload / self.rate(p, gamma))

    def objective(self, p, f, gamma) -> float:
        return float(np.dot(self.q, self.energy(p, f, gamma)))


@dataclass
class PowerChoice:
    p: float
    f: float
    t_comm: float
    energy: float
    clamp: str | None  # None, "p_min" or "p_max"
    feasible: bool


@dataclass
class KktMultipliers:
    mu: float
    lambda_active: np.ndarray


@dataclass
class BandwidthAllocation:
    gamma: np.ndarray
    kkt: KktMultipliers
    feasible: bool
    sum_rate: float

    @property
    def objective(self) -> float:
        """Negative sum rate, the quantity the allocation minimises."""
        return -self.sum_rate


@dataclass
class AllocSolution:
    p: np.ndarray
    f: np.ndarray
    gamma: np.ndarray
    objective: float
    iterations: int
    feasible: bool = True
    converged: bool = True
    history: list = field(default_factory=list)
    energy: np.ndarray | None = None


def _pow2m1(x: float) -> float:
    """2**x - 1 without overflow surprises."""
    if x > 1020:
        return math.inf
    return math.expm1(x * LN2)


def p_min_required(inst: P3Instance, n: int, gamma: float) -> float:
    """Smallest power meeting the deadline with the CPU at f_max.

    Returns ``inf`` when compute alone already exceeds the deadline.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    t_avail = inst.t_comm_budget(n)
    if t_avail <= 0:
        return math.inf
    bw = gamma * inst.bandwidth
    return bw * inst.noise_psd / inst.gain[n] * _pow2m1(inst.payload[n] / (bw * t_avail))


def optimal_frequency(inst: P3Instance, n: int, t_comm: float) -> tuple[float, bool]:
    """Lowest CPU frequency finishing local training by the deadline."""
    slack = inst.deadline - t_comm
    if slack <= 0:
        return float(inst.f_max[n]), False
    if inst.workload[n] == 0:
        return float(inst.f_max[n]), True
    f = inst.workload[n] / slack
    if f > inst.f_max[n] * (1 + 1e-12):
        return float(inst.f_max[n]), False
    return min(f, float(inst.f_max[n])), True


def _energy_of_tcomm(inst: P3Instance, n: int, gamma: float, t: float) -> float:
    bw = gamma * inst.bandwidth
    k0 = bw * inst.noise_psd / inst.gain[n]
    comp = inst.energy_coeff * inst.workload[n] ** 3 / (inst.deadline - t) ** 2
    return comp + k0 * t * _pow2m1(inst.payload[n] / (bw * t))


def energy_slope(inst: P3Instance, n: int, gamma: float, t: float) -> float:
    """d E_n / d T_comm at upload time ``t`` (queue weight excluded)."""
    bw = gamma * inst.bandwidth
    k0 = bw * inst.noise_psd / inst.gain[n]
    a = inst.payload[n] / bw
    comp = 2.0 * inst.energy_coeff * inst.workload[n] ** 3 / (inst.deadline - t) ** 3
    x = a / t
    if x > 1020:
        return -math.inf
    return comp + k0 * ((1.0 - x * LN2) * 2.0 ** x - 1.0)


def optimal_power(inst: P3Instance, n: int, gamma: float) -> PowerChoice:
    """Energy-minimising power for UAV ``n`` at bandwidth share ``gamma``.

    The queue weight is irrelevant here: it scales the whole per-UAV energy.
    The search runs over the upload time T in [T(p_max), T(p_min)], where the
    energy is strictly convex, and maps the minimiser back to a power.
    """
    t_hi = inst.t_comm_budget(n)
    bw = gamma * inst.bandwidth
    k0 = bw * inst.noise_psd / inst.gain[n]
    r_max = bw * math.log1p(inst.p_max[n] / k0) / LN2
    t_lo = inst.payload[n] / r_max
    if t_hi <= 0 or t_lo > t_hi * (1 + 1e-12):
        return PowerChoice(float(inst.p_max[n]), float(inst.f_max[n]), t_lo, math.inf, None, False)
    t_lo = min(t_lo, t_hi)
    if t_hi - t_lo <= 1e-15 * t_hi or energy_slope(inst, n, gamma, t_hi) <= 0:
        t_star, clamp = t_hi, "p_min"
        p = p_min_required(inst, n, gamma)
    elif energy_slope(inst, n, gamma, t_lo) >= 0:
        t_star, clamp = t_lo, "p_max"
        p = float(inst.p_max[n])
    else:
        t_star = brentq(lambda t: energy_slope(inst, n, gamma, t), t_lo, t_hi,
                        xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        clamp = None
        p = k0 * _pow2m1(inst.payload[n] / (bw * t_star))
    p = min(p, float(inst.p_max[n]))
    f, ok = optimal_frequency(inst, n, t_star)
    if clamp == "p_min":
        f = float(inst.f_max[n])
    energy = inst.energy_coeff * inst.workload[n] * f ** 2 + p * t_star
    return PowerChoice(p, f, t_star, energy, clamp, ok)


# ---------------------------------------------------------------------------
# bandwidth: sum-rate KKT allocation
# ---------------------------------------------------------------------------

def min_share_for_rate(p: float, h: float, rate: float, channel: ChannelParams,
                       upper: float = 1.0) -> float:
    """Smallest share whose rate reaches ``rate`` (inf if even ``upper`` cannot)."""
    B, n0 = channel.bandwidth_total, channel.noise_psd

    def r(g):
        return g * B * math.log1p(p * h / (g * B * n0)) / LN2

    if rate <= 0:
        return 0.0
    if p <= 0 or r(upper) < rate:
        return math.inf
    lo, hi = 0.0, upper
    # monotone bisection; 200 halvings reach the float floor
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if r(mid) >= rate:
            hi = mid
        else:
            lo = mid
    return hi


def _share_scale(mu: float) -> float:
    """Interior share per unit ``c = p h / (B N0)`` at multiplier ``mu``."""
    w = lambert_w0(-math.exp(-1.0 - mu * LN2))
    return -w / (1.0 + w) if w > -1.0 else math.inf


def bandwidth_allocate(p, h, payload, t_comp, channel: ChannelParams,
                       deadline: float) -> BandwidthAllocation:
    """Sum-rate maximising bandwidth shares under per-UAV deadline rates.

    Parameters
    ----------
    p, h, payload, t_comp : arrays, shape (N,)
        Fixed powers (W), channel gains, upload sizes (bits) and compute times (s).
    channel : ChannelParams
    deadline : float
        Round deadline T_max (s).

    Returns
    -------
    BandwidthAllocation
        UAVs with a slack deadline take the Lambert-W interior share
        ``c * (-W(x) / (1 + W(x)))`` with ``x = -2**-(mu + 1/ln 2)``; UAVs whose
        deadline binds take the smallest share meeting it.  ``mu`` is found by
        bisection so the shares sum to one.
    """
    p = np.asarray(p, dtype=float)
    h = np.asarray(h, dtype=float)
    payload = np.asarray(payload, dtype=float)
    t_comp = np.asarray(t_comp, dtype=float)
    n = p.size
    B, n0 = channel.bandwidth_total, channel.noise_psd
    c = p * h / (B * n0)

    def fail():
        return BandwidthAllocation(np.full(n, 1.0 / n), KktMultipliers(math.nan, np.zeros(n, bool)),
                                   False, math.nan)

    slack = deadline - t_comp
    if np.any(slack <= 0) or np.any(p <= 0):
        return fail()
    need = payload / slack
    lb = np.array([min_share_for_rate(p[i], h[i], need[i], channel) for i in range(n)])
    total_lb = lb.sum()
    if not np.isfinite(total_lb) or total_lb > 1.0 + 1e-12:
        return fail()

    def excess(mu):
        return np.maximum(lb, c * _share_scale(mu)).sum() - 1.0

    if total_lb >= 1.0 - 1e-15:
        gamma = lb / total_lb
        active = np.ones(n, bool)
        mu = math.inf
    else:
        mu_lo, mu_hi = 1.0, 1.0
        while excess(mu_lo) <= 0 and mu_lo > 1e-300:
            mu_lo *= 0.5 ** 8
        while excess(mu_hi) > 0 and mu_hi < 2000:
            mu_hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (mu_lo + mu_hi)
            if not (mu_lo < mid < mu_hi):
                break
            if excess(mid) > 0:
                mu_lo = mid
            else:
                mu_hi = mid
        mu = 0.5 * (mu_lo + mu_hi)
        active = lb >= c * _share_scale(mu)
        # polish: with the active set fixed the interior scale is linear
        free = ~active
        s = (1.0 - lb[active].sum()) / c[free].sum()
        gamma = np.where(active, lb, c * s)
        # map the polished scale back to its multiplier (W = -s / (1 + s))
        w = -s / (1.0 + s)
        mu = (-1.0 - math.log(-w * math.exp(w))) / LN2
    sum_rate = float(np.sum(gamma * B * np.log1p(c / gamma) / LN2))
    return BandwidthAllocation(gamma, KktMultipliers(mu, active), True, sum_rate)


# ---------------------------------------------------------------------------
# block coordinate descent
# ---------------------------------------------------------------------------

def _power_step(inst: P3Instance, gamma):
    choices = [optimal_power(inst, i, gamma[i]) for i in range(inst.n)]
    p = np.array([c.p for c in choices])
    f = np.array([c.f for c in choices])
    ok = all(c.feasible for c in choices)
    return p, f, ok


def _t_of_gamma(inst, p, gamma):
    return inst.payload / inst.rate(p, gamma)


def _gamma_block_terms(inst: P3Instance, p, gamma):
    """Weighted energy and its first two derivatives in gamma (f re-optimised)."""
    B = inst.bandwidth
    c = p * inst.gain / (B * inst.noise_psd)
    A = c / gamma
    r = gamma * B * np.log1p(A) / LN2
    r1 = B * (np.log1p(A) - A / (1.0 + A)) / LN2
    r2 = -B * A ** 2 / (gamma * (1.0 + A) ** 2) / LN2
    t = inst.payload / r
    t1 = -inst.payload * r1 / r ** 2
    t2 = inst.payload * (2.0 * r1 ** 2 - r * r2) / r ** 3
    slack = inst.deadline - t
    cw = inst.energy_coeff * inst.workload ** 3
    e = cw / slack ** 2 + p * t
    de_dt = 2.0 * cw / slack ** 3 + p
    g1 = de_dt * t1
    g2 = 6.0 * cw / slack ** 4 * t1 ** 2 + de_dt * t2
    return inst.q * e, inst.q * g1, inst.q * g2


def _deadline_shares(inst: P3Instance, p, upper):
    """Smallest shares keeping t_comm within budget (safeguarded Newton).

    The rate is increasing and concave in the share and ``upper`` is feasible,
    so [lo, hi] always brackets the root with ``hi`` feasible.
    """
    c = p * inst.gain / (inst.bandwidth * inst.noise_psd)
    need = inst.payload / inst.t_comm_budget()
    lo = np.zeros_like(upper)
    hi = upper.copy()
    g = upper.copy()
    for _ in range(60):
        a = c / g
        F = inst.rate(p, g) - need
        dF = inst.bandwidth * (np.log1p(a) - a / (1.0 + a)) / LN2
        hi = np.where(F >= 0, np.minimum(g, hi), hi)
        lo = np.where(F < 0, np.maximum(g, lo), lo)
        step = g - F / dF
        inside = (step > lo) & (step < hi)
        g_new = np.where(inside, step, 0.5 * (lo + hi))
        if np.all(np.abs(step - g) <= 1e-12 * g):
            g = np.clip(step, lo, hi)
            break
        g = g_new
    # Newton creeps up from the infeasible side; nudge the last iterate over
    for bump in (1e-12, 1e-10):
        cand = np.minimum(g * (1 + bump), hi)
        hi = np.where(inst.rate(p, cand) >= need, cand, hi)
    return hi


def _gamma_step(inst: P3Instance, p, gamma, max_newton=50):
    """Minimise sum Q E over the shares with powers fixed, CPU frequency following.

    Active-set projected Newton on the simplex with lower bounds; each share
    must keep the upload short enough for compute at f_max.
    """
    n = inst.n
    weighted = inst.q > 0
    if n == 1 or not weighted.any():
        return gamma
    lb = np.minimum(_deadline_shares(inst, p, gamma), gamma)
    g = gamma.copy()
    # zero-weight UAVs only keep their deadline share
    spare = float(np.sum(gamma[~weighted] - lb[~weighted]))
    if spare > 0:
        g[~weighted] = lb[~weighted]
        g[weighted] += spare * g[weighted] / g[weighted].sum()

    e, g1, g2 = _gamma_block_terms(inst, p, g)
    f_cur = float(e.sum())
    for _ in range(max_newton):
        free = weighted.copy()
        d = np.zeros(n)
        # pin UAVs at their bound whose Newton step points below it
        for _ in range(n):
            if free.sum() < 2:
                break
            nu = np.sum(g1[free] / g2[free]) / np.sum(1.0 / g2[free])
            d = np.where(free, -(g1 - nu) / np.where(free, g2, 1.0), 0.0)
            stuck = free & (g <= lb * (1 + 1e-12)) & (d < 0)
            if not stuck.any():
                break
            free &= ~stuck
        decrease = float(np.dot(g1, d))
        # Newton decrement small enough: further steps are below float noise
        if free.sum() < 2 or -decrease <= 1e-13 * abs(f_cur):
            break
        neg = d < 0
        alpha = min(1.0, float(np.min((lb[neg] - g[neg]) / d[neg]))) if neg.any() else 1.0
        while alpha > 1e-14:
            trial = np.maximum(g + alpha * d, lb)
            e, t1, t2 = _gamma_block_terms(inst, p, trial)
            f_trial = float(e.sum())
            if f_trial <= f_cur + 1e-4 * alpha * decrease:
                break
            alpha *= 0.5
        else:
            break
        g, f_cur, g1, g2 = trial, f_trial, t1, t2
    return g


def bcd_solve(inst: P3Instance, gamma0=None, tol: float = 1e-6, max_iter: int = 100,
              abs_floor: float = 1e-12) -> AllocSolution:
    """Alternate the (p, f) and (gamma, f) blocks until the objective settles.

    The stopping threshold is ``tol`` times the first iterate's objective,
    floored at ``abs_floor``.  Every recorded objective is non-increasing.
    """
    n = inst.n
    gamma = np.full(n, 1.0 / n) if gamma0 is None else np.asarray(gamma0, dtype=float).copy()
    p, f, ok = _power_step(inst, gamma)
    if not ok:
        return AllocSolution(p, f, gamma, math.inf, 0, feasible=False, converged=False)
    obj = inst.objective(p, f, gamma)
    history = [obj]
    eps = max(tol * abs(obj), abs_floor)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        prev = obj
        if it > 1:
            p_new, f_new, ok = _power_step(inst, gamma)
            obj_new = inst.objective(p_new, f_new, gamma)
            if ok and obj_new <= obj:
                p, f, obj = p_new, f_new, obj_new
            history.append(obj)
        g_new = _gamma_step(inst, p, gamma)
        if g_new is not gamma:
            t = _t_of_gamma(inst, p, g_new)
            f_new = np.minimum(inst.workload / (inst.deadline - t), inst.f_max)
            obj_new = inst.objective(p, f_new, g_new)
            if obj_new <= obj:
                gamma, f, obj = g_new, f_new, obj_new
        history.append(obj)
        if prev - obj <= eps and it > 1:
            converged = True
            break
    if not converged:
        log.warning("bcd_solve stopped after %d iterations without converging", it)
    return AllocSolution(p, f, gamma, obj, it, feasible=True, converged=converged,
                         history=history, energy=inst.energy(p, f, gamma))
