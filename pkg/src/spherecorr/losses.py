"""Correspondence losses and their exact gradients.

Per-anchor error between predicted and ground-truth canonical coordinates is
either the L1 or L2 norm of the row difference. Five loss variants act on
that error:

    l1         e1
    smooth_l1  5*e1^2 if e1 <= 0.1 else e1 - 0.05
    hyp_l1     arcosh(1 + e1)
    l2         e2
    hyp_l2     arcosh(1 + e2)        (default for training)

The arcosh variants blow up the gradient near zero error
(d/de arcosh(1+e) = 1/sqrt(e^2 + 2e), ~1/sqrt(2e) as e -> 0), which keeps
pressure on almost-correct anchors late in training. At e = 0 exactly every
gradient is defined as 0: the prediction is exact, and the divergence is an
artifact of the norm's kink at the optimum, not a direction worth stepping in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOSS_KINDS = ("l1", "smooth_l1", "hyp_l1", "l2", "hyp_l2")
DEFAULT_LOSS = "hyp_l2"

SMOOTH_THRESHOLD = 0.1


@dataclass(frozen=True)
class LossReport:
    value: float
    per_anchor: np.ndarray  # (M,)
    grad_wrt_o: np.ndarray  # (M, 3), gradient of value (the mean)


def arcosh1p(x: np.ndarray) -> np.ndarray:
    """arcosh(1 + x) for x >= 0.

    Piecewise: log1p(x + sqrt(x*(x+2))) below 1e-4 where arccosh(1+x) has
    cancellation in the 1+x rounding, plain arccosh above.
    """
    x = np.asarray(x, dtype=float)
    small = x < 1e-4
    out = np.empty_like(x)
    xs = x[small]
    out[small] = np.log1p(xs + np.sqrt(xs * (xs + 2.0)))
    out[~small] = np.arccosh(1.0 + x[~small])
    return out


def _d_arcosh1p(e: np.ndarray) -> np.ndarray:
    """d/de arcosh(1+e) = 1/sqrt(e^2 + 2e); caller guards e = 0."""
    return 1.0 / np.sqrt(e * (e + 2.0))


def corr_error(o: np.ndarray, o_gt: np.ndarray, norm: str = "l2") -> np.ndarray:
    """Per-anchor L1 or L2 distance between row-aligned M x 3 arrays."""
    o = np.asarray(o, dtype=float)
    o_gt = np.asarray(o_gt, dtype=float)
    if o.shape != o_gt.shape or o.ndim != 2 or o.shape[1] != 3:
        raise ValueError(f"row-aligned Mx3 inputs required, got {o.shape} vs {o_gt.shape}")
    d = o - o_gt
    if norm == "l1":
        return np.abs(d).sum(axis=1)
    if norm == "l2":
        return np.linalg.norm(d, axis=1)
    raise ValueError(f"unknown norm: {norm!r}")


def corr_loss(
    o: np.ndarray,
    o_gt: np.ndarray,
    kind: str = DEFAULT_LOSS,
    weights: np.ndarray | None = None,
) -> LossReport:
    """Mean correspondence loss with analytic gradient w.r.t. o.

    per_anchor holds the un-averaged loss terms; grad_wrt_o is the gradient
    of the returned mean (each row carries the 1/M factor). Optional
    non-negative weights turn the mean into sum(w*per)/sum(w), e.g. to
    restrict the loss to assigned anchors.
    """
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind: {kind!r}")
    o = np.asarray(o, dtype=float)
    o_gt = np.asarray(o_gt, dtype=float)
    d = o - o_gt
    m = len(d)

    if kind in ("l1", "smooth_l1", "hyp_l1"):
        e = np.abs(d).sum(axis=1)
        d_dir = np.sign(d)  # d e1 / d o
    else:
        e = np.linalg.norm(d, axis=1)
        safe = np.where(e > 0, e, 1.0)
        d_dir = d / safe[:, None]  # d e2 / d o, zero row where e = 0

    if kind == "l1" or kind == "l2":
        per = e
        dl_de = np.ones_like(e)
    elif kind == "smooth_l1":
        quad = e <= SMOOTH_THRESHOLD
        per = np.where(quad, 5.0 * e * e, e - 0.05)
        dl_de = np.where(quad, 10.0 * e, 1.0)
    else:
        per = arcosh1p(e)
        dl_de = np.where(e > 0, _d_arcosh1p(np.where(e > 0, e, 1.0)), 0.0)

    zero = e == 0.0
    dl_de = np.where(zero, 0.0, dl_de)
    if weights is None:
        grad = (dl_de[:, None] * d_dir) / m
        return LossReport(float(per.mean()), per, grad)
    w = np.asarray(weights, dtype=float)
    if w.shape != (m,) or np.any(w < 0):
        raise ValueError("weights must be a non-negative length-M vector")
    total = w.sum()
    if total == 0:
        raise ValueError("weights sum to zero")
    grad = (w / total)[:, None] * dl_de[:, None] * d_dir
    return LossReport(float((w * per).sum() / total), per, grad)


def corr_loss_grad_check(
    kind: str, n_trials: int = 100, m: int = 6, seed: int = 0, h: float = 1e-6
) -> float:
    """Max relative error of the analytic gradient vs central differences.

    Trials are sampled away from the non-smooth points: components bounded
    away from 0 (the L1 kinks) and, for smooth_l1, the error kept clear of
    the 0.1 branch point. Half the trials use small errors (1e-3 .. 0.1
    scale) to exercise the near-zero regime, half use O(1) errors.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(n_trials):
        scale = (0.01, 0.3) if trial % 2 == 0 else (0.05, 0.5)
        while True:
            mag = rng.uniform(*scale, size=(m, 3))
            sign = rng.choice([-1.0, 1.0], size=(m, 3))
            diff = mag * sign
            e1 = np.abs(diff).sum(axis=1)
            if kind == "smooth_l1" and np.any(np.abs(e1 - SMOOTH_THRESHOLD) < 0.02):
                continue
            if np.all(e1 >= 1e-3):
                break
        o_gt = rng.standard_normal((m, 3))
        o = o_gt + diff
        grad = corr_loss(o, o_gt, kind).grad_wrt_o
        for i in range(m):
            for j in range(3):
                op = o.copy()
                om = o.copy()
                op[i, j] += h
                om[i, j] -= h
                fd = (corr_loss(op, o_gt, kind).value - corr_loss(om, o_gt, kind).value) / (2 * h)
                denom = max(abs(fd), abs(grad[i, j]), 1e-8)
                worst = max(worst, abs(fd - grad[i, j]) / denom)
    return worst


def ts_loss(t: np.ndarray, s: np.ndarray, t_gt: np.ndarray, s_gt: np.ndarray) -> float:
    """L1 regression loss on translation and size 3-vectors."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    return float(np.abs(t - t_gt).sum() + np.abs(s - s_gt).sum())


def loss_curve(kind: str, e_values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(loss, dloss/de) over scalar error values; feeds the loss-bench CSV."""
    e = np.asarray(e_values, dtype=float)
    if np.any(e < 0):
        raise ValueError("errors must be non-negative")
    if kind in ("l1", "l2"):
        val, grad = e.copy(), np.ones_like(e)
    elif kind == "smooth_l1":
        quad = e <= SMOOTH_THRESHOLD
        val = np.where(quad, 5.0 * e * e, e - 0.05)
        grad = np.where(quad, 10.0 * e, 1.0)
    elif kind in ("hyp_l1", "hyp_l2"):
        val = arcosh1p(e)
        grad = np.where(e > 0, _d_arcosh1p(np.where(e > 0, e, 1.0)), 0.0)
    else:
        raise ValueError(f"unknown loss kind: {kind!r}")
    grad = np.where(e == 0, 0.0, grad)
    return val, grad
