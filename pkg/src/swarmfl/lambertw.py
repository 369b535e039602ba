"""Principal branch of the Lambert-W function for real arguments."""
from __future__ import annotations

import math

import numpy as np

from .channel import DomainError

BRANCH_POINT = -math.exp(-1.0)


def _initial_guess(x: np.ndarray) -> np.ndarray:
    w = np.empty_like(x)
    near = x < -0.25
    # series about the branch point in p = sqrt(2(e x + 1))
    p = np.sqrt(np.maximum(2.0 * (math.e * x[near] + 1.0), 0.0))
    w[near] = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    mid = ~near & (x < 3.0)
    w[mid] = np.log1p(x[mid]) * (1.0 - np.log1p(np.log1p(x[mid])) / (2.0 + np.log1p(x[mid])))
    big = x >= 3.0
    l1 = np.log(x[big])
    l2 = np.log(l1)
    w[big] = l1 - l2 + l2 / l1
    return w


def _lambert_w0_scalar(x: float) -> float:
    if x == BRANCH_POINT:
        return -1.0
    if x == 0.0 or math.isinf(x):
        return x
    if x < -0.25:
        p = math.sqrt(max(2.0 * (math.e * x + 1.0), 0.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    elif x < 3.0:
        lp = math.log1p(x)
        w = lp * (1.0 - math.log1p(lp) / (2.0 + lp))
    else:
        l1 = math.log(x)
        l2 = math.log(l1)
        w = l1 - l2 + l2 / l1
    for _ in range(64):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        if denom == 0.0:
            break
        wn = max(w - f / denom, -1.0)
        if abs(wn - w) <= 1e-15 * (1.0 + abs(wn)):
            return wn
        w = wn
    return w


def lambert_w0(x):
    """Solve ``w * exp(w) = x`` for w >= -1.

    Vectorised Halley iteration from a branch-point series (x near -1/e), a
    log1p guess (moderate x) or the asymptotic expansion (large x).  Arguments
    below -1/e raise :class:`DomainError`.
    """
    if isinstance(x, (float, int)) or np.ndim(x) == 0:
        xf = float(x)
        if math.isnan(xf) or xf < BRANCH_POINT:
            raise DomainError("lambert_w0 is defined on [-1/e, inf)")
        return _lambert_w0_scalar(xf)
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < BRANCH_POINT):
        raise DomainError("lambert_w0 is defined on [-1/e, inf)")
    flat = arr.ravel()
    special = (flat == BRANCH_POINT) | (flat == 0.0) | ~np.isfinite(flat)
    xs = np.where(special, 1.0, flat)
    w = _initial_guess(xs)
    for _ in range(64):
        ew = np.exp(w)
        f = w * ew - xs
        wp1 = w + 1.0
        # Halley step; guard the vanishing derivative at w = -1
        wp1 = np.where(wp1 == 0.0, 1e-300, wp1)
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        step = np.divide(f, denom, out=np.zeros_like(f), where=denom != 0.0)
        wn = np.maximum(w - step, -1.0)
        converged = np.all(np.abs(wn - w) <= 1e-15 * (1.0 + np.abs(wn)))
        w = wn
        if converged:
            break
    w = np.where(flat == BRANCH_POINT, -1.0, w)
    w = np.where(flat == 0.0, 0.0, w)
    w = np.where(np.isposinf(flat), np.inf, w)
    out = w.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out
