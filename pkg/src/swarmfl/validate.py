"""Quick oracle sweep behind ``swarmfl validate``: one residual per check."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attention import task_shapley, task_shapley_permutation
from .channel import ChannelParams
from .fl.model import SplitModel
from .lambertw import BRANCH_POINT, lambert_w0
from .lyapunov import VirtualQueueState, queue_update
from .oracles import central_difference, grid_power, pg_bandwidth, queue_fold
from .resource import bandwidth_allocate, bcd_solve, optimal_power
from .sim.instances import random_p3


@dataclass
class Check:
    name: str
    residual: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return math.isfinite(self.residual) and self.residual <= self.tolerance


def _lambert(rng):
    x = rng.uniform(BRANCH_POINT, 10.0, 10_000)
    w = lambert_w0(x)
    return float(np.max(np.abs(w * np.exp(w) - x) / np.maximum(1.0, np.abs(x))))


def _power(rng):
    worst = 0.0
    for _ in range(10):
        inst = random_p3(rng, 4)
        choice = optimal_power(inst, 0, 0.25)
        if choice.feasible:
            _, e_grid = grid_power(inst, 0, 0.25, 20_000)
            worst = max(worst, (choice.energy - e_grid) / e_grid)
    return max(worst, 0.0)


def _bandwidth(rng):
    ch = ChannelParams()
    worst = 0.0
    for _ in range(3):
        inst = random_p3(rng, 10)
        p = rng.uniform(0.05, 0.2, 10)
        t_comp = inst.workload / inst.f_max
        alloc = bandwidth_allocate(p, inst.gain, inst.payload, t_comp, ch, inst.deadline)
        _, best = pg_bandwidth(p, inst.gain, inst.payload, t_comp, ch, inst.deadline)
        worst = max(worst, (best - alloc.sum_rate) / best, abs(alloc.gamma.sum() - 1.0))
    return worst


def _bcd(rng):
    worst = 0.0
    for _ in range(10):
        hist = np.asarray(bcd_solve(random_p3(rng, 6)).history)
        worst = max(worst, float(np.max(np.diff(hist), initial=0.0)) / abs(hist[0]))
    return worst


def _shapley(rng):
    v = rng.normal(size=(4, 16))
    return float(np.max(np.abs(task_shapley(v) - task_shapley_permutation(v))))


def _backprop(rng):
    model = SplitModel(6, (5, 4), 3)
    ext, head = model.init(rng)
    head = rng.normal(scale=0.5, size=head.size)
    x = rng.normal(size=(20, 6))
    y = rng.integers(0, 3, 20)
    _, g_ext, g_head = model.loss_and_grad(ext, head, x, y)
    worst = 0.0
    for k in rng.choice(ext.size, 10, replace=False):
        fd = central_difference(lambda w: model.loss(w, head, x, y), ext, int(k))
        worst = max(worst, abs(fd - g_ext[k]) / max(abs(fd), 1e-8))
    for k in rng.choice(head.size, 10, replace=False):
        fd = central_difference(lambda w: model.loss(ext, w, x, y), head, int(k))
        worst = max(worst, abs(fd - g_head[k]) / max(abs(fd), 1e-8))
    return worst


def _queue(rng):
    energies = rng.uniform(0, 1, (100, 4))
    state = VirtualQueueState.empty(4, 40.0, 100, 1.0)
    for row in energies:
        state = queue_update(state, row)
    return float(np.max(np.abs(state.q - queue_fold(energies, 0.4))))


CHECKS = [
    ("lambert_w0 residual", _lambert, 1e-12),
    ("optimal_power vs power grid", _power, 1e-4),
    ("bandwidth vs projected gradient", _bandwidth, 1e-4),
    ("bcd objective increase", _bcd, 0.0),
    ("shapley vs orderings", _shapley, 1e-10),
    ("backprop vs finite difference", _backprop, 1e-4),
    ("queue vs scalar fold", _queue, 0.0),
]


def run_checks(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    return [Check(name, float(fn(rng)), tol) for name, fn, tol in CHECKS]


def format_table(checks) -> str:
    width = max(len(c.name) for c in checks)
    lines = [f"{'check':<{width}}  {'residual':>10}  {'tolerance':>9}  status"]
    for c in checks:
        lines.append(f"{c.name:<{width}}  {c.residual:10.3e}  {c.tolerance:9.1e}  "
                     f"{'ok' if c.ok else 'FAIL'}")
    return "\n".join(lines)
