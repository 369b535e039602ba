"""Task importance weights from loss balance and Task Shapley Values."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SHAPLEY_MAX_TASKS = 12


def softmax(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    z = np.exp(x - np.max(x))
    return z / z.sum()


@dataclass
class AttentionState:
    n_tasks: int
    varpi: float = 0.8
    kappa: float = 0.8
    gamma_cum: np.ndarray = field(default=None)
    shapley_cum: np.ndarray = field(default=None)
    loss_weights: np.ndarray = field(default=None)
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        if not (0 <= self.varpi <= 1 and 0 <= self.kappa <= 1):
            raise ValueError("EMA factors must lie in [0, 1]")
        m = self.n_tasks
        if self.gamma_cum is None:
            self.gamma_cum = np.zeros(m)
        if self.shapley_cum is None:
            self.shapley_cum = np.zeros(m)
        if self.loss_weights is None:
            self.loss_weights = np.full(m, 1.0 / m)
        if self.weights is None:
            self.weights = np.full(m, 1.0 / m)


def update_loss_weights(state: AttentionState, losses) -> np.ndarray:
    """Fold the latest per-task losses into Γ and return softmax(Γ)."""
    losses = np.asarray(losses, dtype=float)
    if not np.all(np.isfinite(losses)):
        raise ValueError("losses must be finite")
    state.gamma_cum = state.varpi * state.gamma_cum + (1 - state.varpi) * losses
    state.loss_weights = softmax(state.gamma_cum)
    return state.loss_weights


def combine_weights(state: AttentionState, phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if not np.all(np.isfinite(phi)):
        raise ValueError("Shapley values must be finite")
    state.shapley_cum = state.kappa * state.shapley_cum + (1 - state.kappa) * phi
    mix = state.loss_weights + softmax(state.shapley_cum)
    state.weights = mix / mix.sum()
    return state.weights


def _popcount(x: int) -> int:
    return bin(x).count("1")


def task_shapley(values) -> np.ndarray:
    """Shapley value of each task, averaged over the M per-task games.

    Parameters
    ----------
    values : array (M, 2**M)
        ``values[m, mask]`` is v_m of the coalition whose members are the set
        bits of ``mask`` (bit i = task i).

    Returns
    -------
    ndarray (M,)
        ``phi_i = (1/M) sum_m sum_{C not containing i} w(|C|) (v_m(C+i) - v_m(C))``
        with ``w(k) = 1 / (M * binom(M-1, k))``.
    """
    values = np.asarray(values, dtype=float)
    m = values.shape[0]
    if m > SHAPLEY_MAX_TASKS:
        raise ValueError(f"exact Shapley enumeration is limited to {SHAPLEY_MAX_TASKS} tasks")
    if values.shape != (m, 1 << m):
        raise ValueError("values must have shape (M, 2**M)")
    weight = [1.0 / (m * math.comb(m - 1, k)) for k in range(m)]
    mean_game = values.mean(axis=0)
    phi = np.zeros(m)
    for i in range(m):
        bit = 1 << i
        for mask in range(1 << m):
            if mask & bit:
                continue
            phi[i] += weight[_popcount(mask)] * (mean_game[mask | bit] - mean_game[mask])
    return phi


def task_shapley_permutation(values) -> np.ndarray:
    """Reference form: average marginal contribution over all task orderings."""
    import itertools

    values = np.asarray(values, dtype=float)
    m = values.shape[0]
    phi = np.zeros(m)
    perms = list(itertools.permutations(range(m)))
    for game in values:
        for order in perms:
            mask = 0
            for i in order:
                phi[i] += game[mask | (1 << i)] - game[mask]
                mask |= 1 << i
    return phi / (len(perms) * m)
