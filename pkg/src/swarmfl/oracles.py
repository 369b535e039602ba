"""Slow, independent reference computations used to check the fast solvers.

Nothing here is on the simulation path.  Each routine takes a different route
to the same answer as its production counterpart: bisection instead of Halley
steps, projected gradient instead of the multiplier search, dense grids and a
general-purpose NLP solver instead of closed forms, plain loops instead of
vectorised sums.
"""
from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.optimize import minimize

from .channel import ChannelParams
from .resource import P3Instance


def lambert_bisect(x: float, iters: int = 200) -> float:
    """Principal-branch Lambert W by plain bisection on [-1, hi]."""
    lo, hi = -1.0, max(1.0, math.log1p(max(x, 0.0)) + 1.0)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid * math.exp(mid) < x:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sum_rate(gamma, p, h, channel: ChannelParams) -> float:
    gamma = np.asarray(gamma, float)
    snr = p * h / (gamma * channel.bandwidth_total * channel.noise_psd)
    return float(np.sum(gamma * channel.bandwidth_total * np.log2(1.0 + snr)))


def _share_floor(p, h, need, channel: ChannelParams) -> float:
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = mid * channel.bandwidth_total * math.log2(
            1.0 + p * h / (mid * channel.bandwidth_total * channel.noise_psd)) if mid > 0 else 0.0
        if r >= need:
            hi = mid
        else:
            lo = mid
    return hi


def _project(v, lb):
    """Euclidean projection onto {g >= lb, sum g = 1}."""
    lo, hi = float(np.min(v - lb)) - 1.0, float(np.max(v)) + 1.0
    for _ in range(200):
        tau = 0.5 * (lo + hi)
        if np.maximum(lb, v - tau).sum() > 1.0:
            lo = tau
        else:
            hi = tau
    return np.maximum(lb, v - 0.5 * (lo + hi))


def pg_bandwidth(p, h, payload, t_comp, channel: ChannelParams, deadline: float,
                 tol: float = 1e-10, max_iter: int = 200_000):
    """Maximise the sum rate over {gamma >= deadline floor, sum gamma = 1} by
    projected gradient ascent with backtracking; returns (gamma, sum_rate)."""
    p, h = np.asarray(p, float), np.asarray(h, float)
    need = np.asarray(payload, float) / (deadline - np.asarray(t_comp, float))
    lb = np.array([_share_floor(p[i], h[i], need[i], channel) for i in range(p.size)])
    B, n0 = channel.bandwidth_total, channel.noise_psd
    c = p * h / (B * n0)
    g = _project(np.full(p.size, 1.0 / p.size), lb)
    f = sum_rate(g, p, h, channel)
    step = 1e-7
    for _ in range(max_iter):
        grad = B / math.log(2) * (np.log1p(c / g) - c / (g + c))
        while True:
            cand = _project(g + step * grad, lb)
            fc = sum_rate(cand, p, h, channel)
            if fc >= f or step < 1e-30:
                break
            step *= 0.5
        moved = np.max(np.abs(cand - g))
        done = fc - f <= tol * abs(f) and moved < 1e-13
        g, f = cand, max(fc, f)
        step *= 2.0
        if done:
            break
    return g, f


def _energy_of_power(inst: P3Instance, n: int, gamma: float, powers):
    rate = gamma * inst.bandwidth * np.log2(
        1.0 + powers * inst.gain[n] / (gamma * inst.bandwidth * inst.noise_psd))
    t_comm = inst.payload[n] / rate
    f = inst.workload[n] / (inst.deadline - t_comm)
    ok = (t_comm < inst.deadline) & (f <= inst.f_max[n] * (1 + 1e-12))
    e = inst.energy_coeff * inst.workload[n] * f ** 2 + powers * t_comm
    return np.where(ok, e, np.inf)


def grid_power(inst: P3Instance, n: int, gamma: float, points: int = 100_000):
    """Dense grid over transmit power with the deadline-tight frequency;
    returns (best power, best energy)."""
    powers = np.linspace(0.0, inst.p_max[n], points + 1)[1:]
    e = _energy_of_power(inst, n, gamma, powers)
    k = int(np.argmin(e))
    return float(powers[k]), float(e[k])


def joint_minimize(inst: P3Instance, starts: int = 6, seed: int = 0):
    """Weighted energy over (p, f, gamma) jointly with SLSQP from several starts."""
    n = inst.n
    rng = np.random.default_rng(seed)
    scale = np.concatenate([inst.p_max, inst.f_max, np.ones(n)])

    def unpack(z):
        z = z * scale
        return z[:n], z[n:2 * n], z[2 * n:]

    def obj(z):
        p, f, g = unpack(z)
        return inst.objective(p, f, np.maximum(g, 1e-12))

    def deadline(z):
        p, f, g = unpack(z)
        g = np.maximum(g, 1e-12)
        rate = inst.rate(np.maximum(p, 1e-15), g)
        return (inst.deadline - inst.workload / f - inst.payload / rate) / inst.deadline

    cons = [{"type": "eq", "fun": lambda z: z[2 * n:].sum() - 1.0},
            {"type": "ineq", "fun": deadline}]
    bounds = [(1e-9, 1.0)] * (2 * n) + [(1e-6, 1.0)] * n
    best = None
    for k in range(starts):
        g0 = rng.dirichlet(np.ones(n)) if k else np.full(n, 1.0 / n)
        z0 = np.concatenate([np.full(n, 0.9), np.full(n, 0.9), g0])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # SLSQP bound clipping
            res = minimize(obj, z0, method="SLSQP", bounds=bounds, constraints=cons,
                           options={"maxiter": 2000, "ftol": 1e-14})
        if np.all(deadline(res.x) >= -1e-9) and abs(res.x[2 * n:].sum() - 1) < 1e-8:
            if best is None or res.fun < best.fun:
                best = res
    return None if best is None else (best.fun, unpack(best.x))


def central_difference(fun, x, index: int, step: float = 1e-5) -> float:
    e = np.zeros_like(x)
    e[index] = step
    return (fun(x + e) - fun(x - e)) / (2 * step)


def naive_head_update(head, packets, lr):
    num = np.zeros_like(head)
    den = 0.0
    for pk in packets:
        for k in range(head.size):
            num[k] += pk.sample_count * pk.g_u[k]
        den += pk.sample_count
    return np.array([head[k] - lr * num[k] / den for k in range(head.size)])


def naive_extractor_update(extractors, grads, totals, share_sets, lr):
    out = np.array(extractors, dtype=float)
    for m, members in enumerate(share_sets):
        for k in range(out.shape[1]):
            num = sum(totals[i] * grads[i][k] for i in members)
            den = sum(totals[i] for i in members)
            out[m][k] = extractors[m][k] - lr * num / den
    return out


def queue_fold(energies, budget):
    """Scalar loop over rounds and UAVs of q <- max(q + E - budget, 0)."""
    energies = np.atleast_2d(energies)
    q = [0.0] * energies.shape[1]
    for row in energies:
        q = [max(q[n] + float(row[n]) - float(budget), 0.0) for n in range(len(q))]
    return np.array(q)

