"""Split network: dense tanh feature extractor plus a softmax predictor head.

Parameters live in flat float64 vectors so they can be averaged, differenced
and shipped as gradients without any framework.  ``hidden=()`` gives an
identity extractor (the head is then plain softmax regression).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SplitModel:
    input_dim: int
    hidden: tuple
    n_classes: int

    @property
    def feature_dim(self) -> int:
        return self.hidden[-1] if self.hidden else self.input_dim

    def _layer_shapes(self):
        dims = (self.input_dim,) + tuple(self.hidden)
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    @property
    def extractor_size(self) -> int:
        return sum(a * b + b for a, b in self._layer_shapes())

    @property
    def head_size(self) -> int:
        return self.feature_dim * self.n_classes + self.n_classes

    @property
    def param_count(self) -> int:
        return self.extractor_size + self.head_size

    def flops_per_sample(self) -> int:
        """Multiply-adds for forward plus backward (about 3x forward), counted as 2 FLOPs each."""
        macs = sum(a * b for a, b in self._layer_shapes()) + self.feature_dim * self.n_classes
        return 6 * macs

    def init(self, rng: np.random.Generator):
        ext = np.empty(self.extractor_size)
        off = 0
        for a, b in self._layer_shapes():
            lim = np.sqrt(6.0 / (a + b))
            ext[off:off + a * b] = rng.uniform(-lim, lim, a * b)
            ext[off + a * b:off + a * b + b] = 0.0
            off += a * b + b
        # zero head: tasks that group the data alike then push the extractor alike
        return ext, np.zeros(self.head_size)

    def _unpack_extractor(self, ext):
        layers = []
        off = 0
        for a, b in self._layer_shapes():
            w = ext[off:off + a * b].reshape(a, b)
            bias = ext[off + a * b:off + a * b + b]
            layers.append((w, bias))
            off += a * b + b
        return layers

    def _unpack_head(self, head):
        k = self.feature_dim * self.n_classes
        return head[:k].reshape(self.feature_dim, self.n_classes), head[k:]

    def features(self, ext, x):
        h = x
        for w, b in self._unpack_extractor(ext):
            h = np.tanh(h @ w + b)
        return h

    def logits(self, ext, head, x):
        w, b = self._unpack_head(head)
        return self.features(ext, x) @ w + b

    def loss(self, ext, head, x, y) -> float:
        z = self.logits(ext, head, x)
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return float(-logp[np.arange(y.size), y].mean())

    def accuracy(self, ext, head, x, y) -> float:
        return float(np.mean(np.argmax(self.logits(ext, head, x), axis=1) == y))

    def loss_and_grad(self, ext, head, x, y):
        """Mean cross-entropy and its gradients w.r.t. extractor and head."""
        acts = [x]
        layers = self._unpack_extractor(ext)
        for w, b in layers:
            acts.append(np.tanh(acts[-1] @ w + b))
        wh, bh = self._unpack_head(head)
        z = acts[-1] @ wh + bh
        z = z - z.max(axis=1, keepdims=True)
        ez = np.exp(z)
        prob = ez / ez.sum(axis=1, keepdims=True)
        n = y.size
        loss = float(-np.mean(np.log(prob[np.arange(n), y])))
        dz = prob
        dz[np.arange(n), y] -= 1.0
        dz /= n
        g_head = np.concatenate([(acts[-1].T @ dz).ravel(), dz.sum(axis=0)])
        delta = dz @ wh.T
        g_ext = np.empty_like(ext)
        off = self.extractor_size
        for li in range(len(layers) - 1, -1, -1):
            w, _ = layers[li]
            a, b = w.shape
            dpre = delta * (1.0 - acts[li + 1] ** 2)
            off -= a * b + b
            g_ext[off:off + a * b] = (acts[li].T @ dpre).ravel()
            g_ext[off + a * b:off + a * b + b] = dpre.sum(axis=0)
            delta = dpre @ w.T
        return loss, g_ext, g_head
