"""Virtual energy-deficit queues and the drift-plus-penalty objective."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ComputeParams


@dataclass(frozen=True)
class VirtualQueueState:
    """Per-UAV energy backlog (J) with the per-round budget and tradeoff weight."""

    q: np.ndarray
    e_budget_per_round: np.ndarray
    horizon: int
    v_param: float

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        budget = np.broadcast_to(np.asarray(self.e_budget_per_round, dtype=float), q.shape).copy()
        if np.any(q < 0):
            raise ValueError("queue backlog must be non-negative")
        if np.any(budget <= 0):
            raise ValueError("per-round energy budget must be positive")
        if not self.v_param > 0:
            raise ValueError("V must be positive")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "e_budget_per_round", budget)

    @classmethod
    def empty(cls, n_uav: int, e_max_total, horizon: int, v_param: float):
        """Zero queues with Ē_n = E_max / T."""
        budget = np.broadcast_to(np.asarray(e_max_total, float), (n_uav,)) / max(horizon, 1)
        return cls(np.zeros(n_uav), budget, horizon, v_param)


@dataclass(frozen=True)
class DriftDiagnostics:
    drift_bound_const: float
    lhs_energy_avg: float
    rhs_bound: float

    @property
    def holds(self) -> bool:
        return self.lhs_energy_avg <= self.rhs_bound * (1 + 1e-12)


def queue_update(state: VirtualQueueState, energy) -> VirtualQueueState:
    energy = np.asarray(energy, dtype=float)
    if np.any(energy < 0) or np.any(~np.isfinite(energy)):
        raise ValueError("per-UAV energy must be finite and non-negative")
    q = np.maximum(state.q + energy - state.e_budget_per_round, 0.0)
    return VirtualQueueState(q, state.e_budget_per_round, state.horizon, state.v_param)


def utility(alpha, beta, data_sizes) -> float:
    """Attention-weighted number of samples covered by the association."""
    return float(np.asarray(alpha, float) @ (np.asarray(beta, float) @ np.asarray(data_sizes, float)))


def dpp_objective(state: VirtualQueueState, energy, alpha, beta, data_sizes) -> float:
    """Queue-weighted energy minus V times the weighted utility."""
    energy = np.asarray(energy, dtype=float)
    return float(state.q @ energy) - state.v_param * utility(alpha, beta, data_sizes)


def max_round_energy(compute: ComputeParams) -> np.ndarray:
    """Per-UAV upper bound on one round's energy: full power for the whole
    deadline plus local training at f_max on the most expensive task."""
    n = compute.n_uav
    uav = np.arange(n)
    comp = np.max([compute.energy_coeff * compute.workload(m, uav) * compute.f_max ** 2
                   for m in range(compute.n_tasks)], axis=0)
    return compute.p_max * compute.round_deadline + comp


def drift_bound_constant(compute: ComputeParams, e_budget_per_round) -> float:
    """B = (N/2) * max(max_n Ē_n², Ξ) with Ξ the squared worst-case round energy."""
    budget = np.broadcast_to(np.asarray(e_budget_per_round, float), (compute.n_uav,))
    xi = float(np.max(max_round_energy(compute))) ** 2
    return 0.5 * compute.n_uav * max(float(np.max(budget)) ** 2, xi)


def theorem3_check(energies, e_budget_per_round, v_param: float, b_const: float,
                   u_star_proxy) -> DriftDiagnostics:
    """Compare time-averaged total energy with its drift-plus-penalty bound.

    Parameters
    ----------
    energies : array (T, N)
        Realised per-round, per-UAV energy.
    u_star_proxy : array (T,)
        Per-round upper proxy for the optimal utility (max achievable weighted
        coverage); the true optimum is not observable online.
    """
    energies = np.atleast_2d(np.asarray(energies, dtype=float))
    horizon = energies.shape[0]
    budget_sum = float(np.sum(np.broadcast_to(e_budget_per_round, (energies.shape[1],))))
    if horizon == 0:
        return DriftDiagnostics(b_const, 0.0, budget_sum)
    lhs = float(energies.sum()) / horizon
    u_sum = float(np.sum(u_star_proxy))
    rhs = budget_sum + math.sqrt(2.0 * b_const / horizon + 2.0 * v_param * u_sum / horizon ** 2)
    return DriftDiagnostics(b_const, lhs, rhs)
