"""Local training on UAVs and the two aggregation steps at the EVs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Split
from .model import SplitModel


@dataclass
class ModelBundle:
    """Per-task extractors (identical shapes) and per-task heads."""

    models: list  # SplitModel per task
    extractors: np.ndarray  # (M, P_s)
    heads: list  # flat head vector per task
    lr: float
    local_iters: int
    batch_size: int

    def __post_init__(self):
        sizes = {m.extractor_size for m in self.models}
        if len(sizes) != 1 or {m.input_dim for m in self.models} != {self.models[0].input_dim}:
            raise ValueError("extractor shapes must match across tasks")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")

    @classmethod
    def create(cls, input_dim, hidden, classes_per_task, lr, local_iters, batch_size, rng):
        models = [SplitModel(input_dim, tuple(hidden), k) for k in classes_per_task]
        ext0, _ = models[0].init(rng)
        heads = [m.init(rng)[1] for m in models]
        # one shared starting point keeps the task extractors comparable
        extractors = np.tile(ext0, (len(models), 1))
        return cls(models, extractors, heads, lr, local_iters, batch_size)

    @property
    def n_tasks(self) -> int:
        return len(self.models)


@dataclass
class GradientPacket:
    g_s: np.ndarray
    g_u: np.ndarray
    sample_count: int
    task: int
    uav: int
    train_loss: float = float("nan")


def local_train(bundle: ModelBundle, task: int, uav: int, shard: Split,
                rng: np.random.Generator, full_batch: bool = False) -> GradientPacket:
    """K SGD steps on a fresh mini-batch each; returns (w_start - w_end) / lr."""
    n = len(shard)
    if n == 0:
        raise ValueError(f"UAV {uav} has an empty shard")
    model = bundle.models[task]
    ext0 = bundle.extractors[task]
    head0 = bundle.heads[task]
    ext, head = ext0.copy(), head0.copy()
    y = shard.y[task]
    losses = []
    for _ in range(bundle.local_iters):
        if full_batch or bundle.batch_size >= n:
            idx = slice(None)
        else:
            idx = rng.choice(n, size=bundle.batch_size, replace=False)
        loss, g_ext, g_head = model.loss_and_grad(ext, head, shard.x[idx], y[idx])
        ext -= bundle.lr * g_ext
        head -= bundle.lr * g_head
        losses.append(loss)
    return GradientPacket((ext0 - ext) / bundle.lr, (head0 - head) / bundle.lr, n, task, uav,
                          float(np.mean(losses)) if losses else float("nan"))


def task_gradients(packets, n_tasks: int, size: int):
    """Data-weighted mean extractor gradient and total sample count per task."""
    g = np.zeros((n_tasks, size))
    d = np.zeros(n_tasks)
    for pk in packets:
        g[pk.task] += pk.sample_count * pk.g_s
        d[pk.task] += pk.sample_count
    served = d > 0
    g[served] /= d[served, None]
    return g, d


def aggregate_heads(head, packets, lr: float) -> np.ndarray:
    if not packets:
        raise ValueError("no packets for this task")
    total = sum(pk.sample_count for pk in packets)
    step = sum(pk.sample_count * pk.g_u for pk in packets) / total
    return head - lr * step


def aggregate_extractors(extractors, grads, data_totals, share_sets, lr: float) -> np.ndarray:
    """Each task steps along the data-weighted mean gradient of its share set."""
    extractors = np.asarray(extractors, dtype=float)
    d = np.asarray(data_totals, dtype=float)
    out = extractors.copy()
    for m, members in enumerate(share_sets):
        if m not in members:
            raise ValueError(f"share set of task {m} must contain the task itself")
        idx = np.asarray(members)
        w = d[idx]
        if w.sum() <= 0:
            continue
        out[m] = extractors[m] - lr * (w @ grads[idx]) / w.sum()
    return out
