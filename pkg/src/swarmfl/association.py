"""UAV-to-EV association: per-pair utility table, two-stage heuristic, exhaustive oracle."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelParams, ComputeParams
from .lyapunov import VirtualQueueState, utility
from .resource import AllocSolution, P3Instance, bcd_solve, optimal_power

EXHAUSTIVE_LIMIT = 10 ** 6


class AssociationInfeasible(RuntimeError):
    pass


@dataclass
class UtilityTable:
    j: np.ndarray  # (N, M); +inf marks an infeasible pairing
    energy: np.ndarray  # (N, M) per-pair optimal energy at the stage-one share


@dataclass
class Assignment:
    tasks: np.ndarray  # task index per UAV
    n_tasks: int
    moves: int = 0

    @property
    def beta(self) -> np.ndarray:
        return association_matrix(self.tasks, self.n_tasks)


def association_matrix(tasks, n_tasks: int) -> np.ndarray:
    tasks = np.asarray(tasks, dtype=int)
    beta = np.zeros((n_tasks, tasks.size), dtype=int)
    beta[tasks, np.arange(tasks.size)] = 1
    return beta


def pair_energies(gains, compute: ComputeParams, channel: ChannelParams, share: float) -> np.ndarray:
    """Per-UAV optimal energy if UAV n served task m with bandwidth ``share``."""
    n_tasks, n_uav = compute.n_tasks, compute.n_uav
    out = np.empty((n_uav, n_tasks))
    zero_q = np.zeros(n_uav)
    for m in range(n_tasks):
        inst = P3Instance.from_assignment(np.full(n_uav, m), gains, compute, channel, zero_q)
        for n in range(n_uav):
            choice = optimal_power(inst, n, share)
            out[n, m] = choice.energy if choice.feasible else math.inf
    return out


def utility_table(state: VirtualQueueState, alpha, gains, compute: ComputeParams,
                  channel: ChannelParams, data_sizes) -> UtilityTable:
    """J[n, m] = Q_n E_n(p*, f*) - V alpha_m D_n with every UAV at share 1/N."""
    energy = pair_energies(gains, compute, channel, 1.0 / compute.n_uav)
    alpha = np.asarray(alpha, dtype=float)
    d = np.asarray(data_sizes, dtype=float)
    with np.errstate(invalid="ignore"):
        j = state.q[:, None] * energy - state.v_param * alpha[None, :] * d[:, None]
    j[~np.isfinite(energy)] = math.inf
    return UtilityTable(j, energy)


def delta_repair(tasks, cost, delta) -> Assignment:
    """Move UAVs until every task has at least ``delta[m]`` of them.

    Each move takes the globally cheapest ``cost[n, j] - cost[n, i]`` from a task
    ``i`` currently above its minimum to a task ``j`` below it; a UAV moves at
    most once.  Ties go to the lowest (UAV, target) pair.
    """
    tasks = np.asarray(tasks, dtype=int).copy()
    cost = np.asarray(cost, dtype=float)
    n_uav, n_tasks = cost.shape
    delta = np.asarray(delta, dtype=int)
    if delta.sum() > n_uav:
        raise AssociationInfeasible("more UAVs required than available")
    moved = np.zeros(n_uav, bool)
    moves = 0
    while True:
        counts = np.bincount(tasks, minlength=n_tasks)
        deficit = counts < delta
        if not deficit.any():
            return Assignment(tasks, n_tasks, moves)
        surplus = counts > delta
        best = None
        for n in range(n_uav):
            i = tasks[n]
            if moved[n] or not surplus[i]:
                continue
            for j in np.flatnonzero(deficit):
                if not math.isfinite(cost[n, j]):
                    continue
                d = cost[n, j] - cost[n, i]
                if best is None or d < best[0]:
                    best = (d, n, j)
        if best is None:
            raise AssociationInfeasible("no transfer can repair the task minimums")
        _, n, j = best
        tasks[n] = j
        moved[n] = True
        moves += 1


def two_stage_assign(table: UtilityTable, delta, q=None, alpha=None) -> Assignment:
    """Row-wise argmin of the utility table followed by minimum-count repair.

    With ``q`` and ``alpha`` given, UAVs with an empty queue go straight to the
    most important task they can serve (lowest index on ties).
    """
    j = table.j
    n_uav, n_tasks = j.shape
    if np.any(np.all(~np.isfinite(j), axis=1)):
        raise AssociationInfeasible("a UAV cannot serve any task")
    tasks = np.argmin(j, axis=1)
    if q is not None and alpha is not None:
        alpha = np.asarray(alpha, dtype=float)
        for n in np.flatnonzero(np.asarray(q) == 0):
            masked = np.where(np.isfinite(j[n]), alpha, -np.inf)
            tasks[n] = int(np.argmax(masked))
    return delta_repair(tasks, j, delta)


@dataclass
class Evaluation:
    tasks: np.ndarray
    objective: float
    alloc: AllocSolution


def evaluate_assignment(tasks, state: VirtualQueueState, alpha, gains, compute: ComputeParams,
                        channel: ChannelParams, data_sizes) -> Evaluation:
    """Full allocation for a fixed association and its drift-plus-penalty value."""
    tasks = np.asarray(tasks, dtype=int)
    inst = P3Instance.from_assignment(tasks, gains, compute, channel, state.q)
    alloc = bcd_solve(inst)
    if not alloc.feasible:
        return Evaluation(tasks, math.inf, alloc)
    beta = association_matrix(tasks, compute.n_tasks)
    obj = alloc.objective - state.v_param * utility(alpha, beta, data_sizes)
    return Evaluation(tasks, obj, alloc)


def feasible_associations(n_uav: int, n_tasks: int, delta):
    """Every task-per-UAV tuple meeting the per-task minimums, in lexicographic order."""
    delta = np.asarray(delta, dtype=int)
    for tasks in itertools.product(range(n_tasks), repeat=n_uav):
        if np.all(np.bincount(np.asarray(tasks, dtype=int), minlength=n_tasks) >= delta):
            yield tasks


def exhaustive_assign(state: VirtualQueueState, alpha, gains, compute: ComputeParams,
                      channel: ChannelParams, data_sizes, delta) -> Evaluation:
    """Best association over all feasible ones (lexicographically first on ties).

    Candidates are visited in order of a lower bound (every UAV given the whole
    band) and the search stops once the bound exceeds the best value found; this
    prunes without changing the result.
    """
    n_uav, n_tasks = compute.n_uav, compute.n_tasks
    if n_tasks ** n_uav > EXHAUSTIVE_LIMIT:
        raise ValueError(f"{n_tasks}^{n_uav} associations exceed the enumeration limit")
    delta = np.asarray(delta, dtype=int)
    e_floor = pair_energies(gains, compute, channel, 1.0)
    alpha = np.asarray(alpha, dtype=float)
    d = np.asarray(data_sizes, dtype=float)
    with np.errstate(invalid="ignore"):
        floor = state.q[:, None] * e_floor - state.v_param * alpha[None, :] * d[:, None]
    floor[~np.isfinite(e_floor)] = math.inf
    cands = []
    cols = np.arange(n_uav)
    for tasks in feasible_associations(n_uav, n_tasks, delta):
        cands.append((float(floor[cols, np.array(tasks)].sum()), tasks))
    if not cands:
        raise AssociationInfeasible("no association meets the task minimums")
    cands.sort()
    best = None
    for bound, tasks in cands:
        if best is not None and bound > best.objective:
            break
        ev = evaluate_assignment(tasks, state, alpha, gains, compute, channel, data_sizes)
        if best is None or ev.objective < best.objective or (
                ev.objective == best.objective and tuple(ev.tasks) < tuple(best.tasks)):
            best = ev
    if not math.isfinite(best.objective):
        raise AssociationInfeasible("every association is infeasible")
    return best
