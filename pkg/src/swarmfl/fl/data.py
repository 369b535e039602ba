"""Synthetic multi-task suite and a flat binary tensor format for external data.

Every sample carries one input vector and one label per task, so a UAV can
train whichever task it is associated with on the same local shard.  Inputs
are generated from a latent cluster ``c`` and a nuisance scalar ``u``::

    z = mu_c + spread * eps,   x = U z + nuisance_scale * u * v + noise * xi

"cluster" tasks label a sample by a (task-specific) grouping of ``c`` and so
share the latent features; a "nuisance" task labels by ``sign(u)``, the very
direction the cluster tasks are better off ignoring.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_MAGIC = b"SWT1"
_DTYPES = {0: np.dtype("<f4")}


@dataclass(frozen=True)
class TaskSpec:
    kind: str  # "cluster" or "nuisance"
    n_classes: int
    label_noise: float = 0.0  # share of training labels replaced at random

    def __post_init__(self):
        if self.kind not in ("cluster", "nuisance"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.kind == "nuisance" and self.n_classes != 2:
            raise ValueError("a nuisance task is binary")
        if self.n_classes < 2:
            raise ValueError("a task needs at least two classes")
        if not 0 <= self.label_noise < 1:
            raise ValueError("label_noise must lie in [0, 1)")


@dataclass(frozen=True)
class SuiteConfig:
    n_uav: int = 10
    tasks: tuple = (TaskSpec("cluster", 4, label_noise=0.6), TaskSpec("cluster", 4),
                    TaskSpec("nuisance", 2))
    input_dim: int = 16
    latent_dim: int = 4
    n_clusters: int = 8
    cluster_radius: float = 2.0
    cluster_spread: float = 0.8
    nuisance_scale: float = 4.0
    group_overlap: float = 1.0  # share of clusters a cluster task groups like the first one
    noise: float = 0.5
    total_samples: int = 6000
    min_samples: int = 32
    alpha1: float = 1.0
    alpha2: float = 0.3
    val_size: int = 256
    test_size: int = 1000

    def __post_init__(self):
        if self.alpha1 <= 0 or self.alpha2 <= 0:
            raise ValueError("Dirichlet parameters must be positive")
        if self.latent_dim + 1 > self.input_dim:
            raise ValueError("input_dim must exceed latent_dim")
        if not 0 <= self.group_overlap <= 1:
            raise ValueError("group_overlap must lie in [0, 1]")
        if self.n_uav * self.min_samples > self.total_samples:
            raise ValueError("total_samples too small for the per-UAV minimum")
        if not self.tasks:
            raise ValueError("at least one task required")


@dataclass
class Split:
    x: np.ndarray
    y: np.ndarray  # (M, count) labels per task
    cluster: np.ndarray

    def __len__(self):
        return self.x.shape[0]


@dataclass
class SyntheticTaskSuite:
    config: SuiteConfig
    shards: list  # one Split per UAV
    val: list  # one Split per task (EV)
    test: Split
    class_mix: np.ndarray  # (N, n_clusters) Dirichlet draw per UAV
    label_maps: np.ndarray  # (M, n_clusters); -1 for nuisance tasks
    meta: dict = field(default_factory=dict)

    @property
    def data_sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.shards], dtype=float)


def _sample(rng, count, mix, means, basis, nuis, cfg: SuiteConfig, label_maps,
            noisy: bool = False) -> Split:
    c = rng.choice(cfg.n_clusters, size=count, p=mix)
    z = means[c] + cfg.cluster_spread * rng.standard_normal((count, cfg.latent_dim))
    u = rng.standard_normal(count)
    x = z @ basis.T + cfg.nuisance_scale * u[:, None] * nuis[None, :]
    x += cfg.noise * rng.standard_normal((count, cfg.input_dim))
    y = np.empty((len(cfg.tasks), count), dtype=np.int64)
    for m, task in enumerate(cfg.tasks):
        y[m] = (u > 0).astype(np.int64) if task.kind == "nuisance" else label_maps[m][c]
        if noisy and task.label_noise > 0:
            flip = rng.random(count) < task.label_noise
            y[m, flip] = rng.integers(0, task.n_classes, int(flip.sum()))
    return Split(x, y, c)


def generate_suite(cfg: SuiteConfig, seed: int) -> SyntheticTaskSuite:
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((cfg.input_dim, cfg.latent_dim + 1)))
    basis, nuis = q[:, :cfg.latent_dim], q[:, cfg.latent_dim]
    means = rng.standard_normal((cfg.n_clusters, cfg.latent_dim))
    means *= cfg.cluster_radius / np.linalg.norm(means, axis=1, keepdims=True)
    label_maps = np.full((len(cfg.tasks), cfg.n_clusters), -1, dtype=np.int64)
    base = rng.permutation(cfg.n_clusters)
    for m, task in enumerate(cfg.tasks):
        if task.kind != "cluster":
            continue
        # same grouping of clusters as the base, under fresh class names,
        # except for a random fraction of reassigned clusters
        groups = base % task.n_classes
        groups = rng.permutation(task.n_classes)[groups]
        redo = rng.random(cfg.n_clusters) >= cfg.group_overlap
        groups[redo] = rng.integers(0, task.n_classes, int(redo.sum()))
        label_maps[m] = groups
    sizes = rng.dirichlet(np.full(cfg.n_uav, cfg.alpha1))
    counts = cfg.min_samples + rng.multinomial(cfg.total_samples - cfg.n_uav * cfg.min_samples, sizes)
    mixes = rng.dirichlet(np.full(cfg.n_clusters, cfg.alpha2), size=cfg.n_uav)
    uniform = np.full(cfg.n_clusters, 1.0 / cfg.n_clusters)
    # field-collected training labels may be noisy; EV validation and test sets are clean
    shards = [_sample(rng, int(k), mixes[n], means, basis, nuis, cfg, label_maps, noisy=True)
              for n, k in enumerate(counts)]
    val = [_sample(rng, cfg.val_size, uniform, means, basis, nuis, cfg, label_maps)
           for _ in cfg.tasks]
    test = _sample(rng, cfg.test_size, uniform, means, basis, nuis, cfg, label_maps)
    return SyntheticTaskSuite(cfg, shards, val, test, mixes, label_maps)


def write_tensor(path, array) -> None:
    """Header ``SWT1 | dtype u8 | ndim u32 | dims u64*``, then row-major float32."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BI", 0, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a tensor file")
    code, ndim = struct.unpack_from("<BI", raw, 4)
    if code not in _DTYPES:
        raise ValueError(f"{path}: unsupported dtype code {code}")
    off = 4 + struct.calcsize("<BI")
    shape = struct.unpack_from(f"<{ndim}Q", raw, off)
    off += 8 * ndim
    dtype = _DTYPES[code]
    count = int(np.prod(shape)) if ndim else 1
    if len(raw) - off != count * dtype.itemsize:
        raise ValueError(f"{path}: body size does not match header")
    return np.frombuffer(raw, dtype=dtype, count=count, offset=off).reshape(shape).copy()
