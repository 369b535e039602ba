"""Directed task affinity and the share sets that gate extractor aggregation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

LOSS_FLOOR = 1e-12


@dataclass
class AffinityState:
    n_tasks: int
    ell: float = 0.8
    theta: np.ndarray = field(default=None)
    upsilon: np.ndarray = field(default=None)
    share_sets: list = field(default=None)

    def __post_init__(self):
        if not 0 <= self.ell <= 1:
            raise ValueError("ell must lie in [0, 1]")
        m = self.n_tasks
        if self.theta is None:
            self.theta = np.zeros((m, m))
        if self.upsilon is None:
            self.upsilon = np.zeros((m, m))
        if self.share_sets is None:
            self.share_sets = [[i] for i in range(m)]


@dataclass
class AffinityRound:
    theta: np.ndarray
    guarded: np.ndarray  # True where the reference loss was too small to divide by


def affinity_round(extractors: np.ndarray, grads: np.ndarray, data_totals,
                   losses: Sequence[Callable[[np.ndarray], float]], lr: float) -> AffinityRound:
    """Theta[i, j]: relative loss change on task j when task i's gradient joins j's step.

    ``extractors[j]`` is task j's current extractor, ``grads[i]`` task i's
    aggregated extractor gradient and ``losses[j]`` evaluates task j's
    validation loss for a candidate extractor.  Both gradients are mixed by
    their data totals.  Positive values mean task i helps task j.
    """
    extractors = np.asarray(extractors, dtype=float)
    grads = np.asarray(grads, dtype=float)
    d = np.asarray(data_totals, dtype=float)
    m = grads.shape[0]
    theta = np.zeros((m, m))
    guarded = np.zeros((m, m), bool)
    for j in range(m):
        ref = losses[j](extractors[j] - lr * grads[j])
        if ref < LOSS_FLOOR:
            guarded[:, j] = True
            guarded[j, j] = False
            continue
        for i in range(m):
            if i == j:
                continue
            total = d[i] + d[j]
            if total <= 0:
                continue
            mixed = (d[i] * grads[i] + d[j] * grads[j]) / total
            theta[i, j] = 1.0 - losses[j](extractors[j] - lr * mixed) / ref
    return AffinityRound(theta, guarded)


def update_share_sets(state: AffinityState, theta) -> list:
    """EMA the affinities and rebuild S_m = {m} + {i : Upsilon[i, m] > 0}."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("affinity must be finite")
    state.theta = theta
    state.upsilon = state.ell * state.upsilon + (1 - state.ell) * theta
    m = state.n_tasks
    state.share_sets = [
        sorted({t} | {i for i in range(m) if i != t and state.upsilon[i, t] > 0})
        for t in range(m)
    ]
    return state.share_sets
