"""Reference association strategies; each ends with the same minimum-count repair."""
from __future__ import annotations

import numpy as np

from ..association import Assignment, delta_repair


class AouTracker:
    """Age of update: rounds since UAV n last served task m (all zero at start)."""

    def __init__(self, n_uav: int, n_tasks: int):
        self.age = np.zeros((n_uav, n_tasks), dtype=np.int64)

    def served(self, tasks) -> None:
        tasks = np.asarray(tasks, dtype=int)
        self.age += 1
        self.age[np.arange(tasks.size), tasks] = 0


def aou_assign(age, delta) -> Assignment:
    """Each UAV joins the task it has neglected longest (lowest index on ties)."""
    age = np.asarray(age, dtype=float)
    return delta_repair(np.argmax(age, axis=1), -age, delta)


def channel_aware_assign(gains, delta) -> Assignment:
    """Each UAV joins the EV with the strongest channel; ``gains`` is (M, N)."""
    g = np.asarray(gains, dtype=float).T
    return delta_repair(np.argmax(g, axis=1), -g, delta)


def random_assign(rng: np.random.Generator, n_uav: int, n_tasks: int, delta) -> Assignment:
    tasks = rng.integers(0, n_tasks, n_uav)
    return delta_repair(tasks, rng.random((n_uav, n_tasks)), delta)
