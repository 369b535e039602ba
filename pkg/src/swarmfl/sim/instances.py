"""Random problem instances shared by the oracles, the validator and the benchmarks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import ChannelParams, ComputeParams, Geometry, channel_gains
from ..lyapunov import VirtualQueueState
from ..resource import P3Instance


@dataclass
class AssociationInstance:
    state: VirtualQueueState
    alpha: np.ndarray
    gains: np.ndarray
    compute: ComputeParams
    channel: ChannelParams
    data_sizes: np.ndarray
    delta: np.ndarray


def random_compute(rng, n_uav: int, n_tasks: int, deadline: float = 3.0) -> ComputeParams:
    base = rng.uniform(4e6, 1.2e7, size=(n_tasks, 1))
    return ComputeParams(
        cycles_per_sample=base * rng.uniform(0.8, 1.25, size=(n_tasks, n_uav)),
        local_iters=5,
        batch_size=64,
        energy_coeff=1e-28,
        f_max=np.full(n_uav, 2e9),
        p_max=np.full(n_uav, 0.2),
        payload_bits=rng.uniform(2e6, 1.2e7, size=n_tasks),
        round_deadline=deadline,
    )


def random_geometry(rng, n_uav: int, n_tasks: int, side: float = 800.0) -> Geometry:
    return Geometry(rng.uniform(0, side, (n_uav, 2)), rng.uniform(0, side, (n_tasks, 2)),
                    rng.uniform(100, 150, n_uav))


def random_p3(rng, n_uav: int, n_tasks: int = 3) -> P3Instance:
    """A feasible-at-equal-shares allocation instance with random queues."""
    channel = ChannelParams()
    while True:
        compute = random_compute(rng, n_uav, n_tasks)
        gains = channel_gains(random_geometry(rng, n_uav, n_tasks), channel)
        tasks = rng.integers(0, n_tasks, n_uav)
        inst = P3Instance.from_assignment(tasks, gains, compute, channel,
                                          rng.uniform(0, 5, n_uav))
        rate = inst.rate(inst.p_max, np.full(n_uav, 1.0 / n_uav))
        if np.all(inst.payload / rate < inst.t_comm_budget()):
            return inst


def random_association(rng, n_uav: int, n_tasks: int, v_param: float = 1.0) -> AssociationInstance:
    channel = ChannelParams()
    compute = random_compute(rng, n_uav, n_tasks)
    gains = channel_gains(random_geometry(rng, n_uav, n_tasks), channel)
    data = rng.integers(100, 1000, n_uav).astype(float)
    q = rng.uniform(0, 400, n_uav) * (rng.random(n_uav) < 0.8)
    state = VirtualQueueState(q, np.full(n_uav, 0.4), 100, v_param)
    alpha = rng.dirichlet(np.ones(n_tasks))
    return AssociationInstance(state, alpha, gains, compute, channel, data,
                               np.ones(n_tasks, dtype=int))
