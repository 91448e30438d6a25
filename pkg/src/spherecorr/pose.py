"""Rotation from (anchor, NOCS) correspondences; similarity Umeyama baseline.

Convention: correspondences pair source anchors A_m with destination unit
vectors O_m related by O = R^T A. The solver therefore returns R with
dst ~= src @ R (row vectors), i.e. the rotation whose transpose maps anchors
onto predictions. Downstream code reports R itself.

All solvers are closed-form (SVD); RANSAC wraps the Procrustes solve with
angular-residual inlier counting. Residuals are angular rather than chordal;
the two orderings are monotone-equivalent, angular reads directly in the
degree thresholds used by the metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, RobustFitError


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 256
    sample_size: int = 3
    inlier_threshold: float = 0.0873  # radians, = 5 degrees
    # Optional second refit on rows under a tighter residual gate. The
    # consensus threshold wants to be loose enough to collect support;
    # the final average then benefits from dropping its noisy fringe.
    refine_threshold: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.sample_size < 2:
            raise ValueError("sample_size must be >= 2")
        if not 0.0 < self.inlier_threshold < np.pi:
            raise ValueError("inlier_threshold must lie in (0, pi)")
        if self.refine_threshold is not None and not 0.0 < self.refine_threshold < np.pi:
            raise ValueError("refine_threshold must lie in (0, pi)")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


def _active_unit_rows(src, dst, mask):
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValueError("src and dst must be matching Mx3 arrays")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        src, dst = src[mask], dst[mask]
    ns = np.linalg.norm(src, axis=1)
    nd = np.linalg.norm(dst, axis=1)
    if np.any(ns == 0) or np.any(nd == 0):
        raise ValueError("correspondence rows must be nonzero")
    # Defensive renormalization; rows are unit by construction upstream.
    return src / ns[:, None], dst / nd[:, None]


def procrustes_rotation(
    src: np.ndarray,
    dst: np.ndarray,
    mask: np.ndarray | None = None,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Least-squares R with dst ~= src @ R over active rows.

    Maximizes trace(R^T H) with H = sum_m w_m A_m O_m^T; the optimum is
    U diag(1, 1, det(UV^T)) V^T from H = U S V^T. Collinear inputs leave H
    rank-1 and the rotation about the common axis undetermined.
    """
    src, dst = _active_unit_rows(src, dst, mask)
    if len(src) < 3:
        raise DegenerateGeometryError("need at least 3 active correspondences")
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        if mask is not None:
            w = w[np.asarray(mask, dtype=bool)]
        h = src.T @ (dst * w[:, None])
    else:
        h = src.T @ dst
    u, s, vt = np.linalg.svd(h)
    if s[1] <= 1e-12 * max(s[0], 1e-300):
        raise DegenerateGeometryError("correspondences are collinear")
    d = np.sign(np.linalg.det(u @ vt))
    return (u * np.array([1.0, 1.0, d])) @ vt


def umeyama_similarity(src: np.ndarray, dst: np.ndarray):
    """Closed-form (R, t, c) minimizing ||dst - (c * src @ R.T + t)||^2.

    Reflections are excluded by the determinant correction, so mirrored
    inputs come back as the nearest proper rotation.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3 or len(src) < 3:
        raise ValueError("src and dst must be matching Nx3 arrays with N >= 3")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    sc = src - mu_s
    dc = dst - mu_d
    var_s = (sc * sc).sum() / len(src)
    if var_s <= 1e-24:
        raise DegenerateGeometryError("source points are coincident")
    cov = dc.T @ sc / len(src)
    u, s, vt = np.linalg.svd(cov)
    if s[1] <= 1e-12 * max(s[0], 1e-300):
        raise DegenerateGeometryError("points are collinear")
    sign = np.sign(np.linalg.det(u) * np.linalg.det(vt))
    diag = np.array([1.0, 1.0, sign])
    r = (u * diag) @ vt
    c = float((s * diag).sum() / var_s)
    t = mu_d - c * (r @ mu_s)
    return r, t, c


def angular_residuals(src: np.ndarray, dst: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Angle between each dst row and R^T applied to the matching src row."""
    mapped = src @ r  # rows of R^T A
    dots = np.clip((mapped * dst).sum(axis=1), -1.0, 1.0)
    return np.arccos(dots)


def ransac_rotation(
    src: np.ndarray,
    dst: np.ndarray,
    cfg: RansacConfig = RansacConfig(),
    mask: np.ndarray | None = None,
):
    """Robust Procrustes: (rotation, inlier mask over all rows, inlier ratio).

    Samples minimal subsets, scores candidates by inliers under the angular
    threshold, keeps the best (ties to the earliest iteration), then refits
    on its inlier set. With refine_threshold set, one more refit runs on the
    rows whose residuals under that fit stay below the tighter gate, and the
    returned inliers are re-evaluated against the final rotation.
    Deterministic given cfg.seed. Raises RobustFitError when no candidate
    reaches sample_size inliers; a returned low inlier_ratio is the
    caller's signal that the fit is untrustworthy.
    """
    m_all = len(np.asarray(src))
    active = np.arange(m_all) if mask is None else np.flatnonzero(np.asarray(mask, dtype=bool))
    if len(active) < cfg.sample_size:
        raise DegenerateGeometryError("fewer active correspondences than sample_size")
    src_a, dst_a = _active_unit_rows(src, dst, mask)

    rng = np.random.default_rng(cfg.seed)
    best_count = -1
    best_inl = None
    for _ in range(cfg.iterations):
        pick = rng.choice(len(active), size=cfg.sample_size, replace=False)
        try:
            cand = procrustes_rotation(src_a[pick], dst_a[pick])
        except DegenerateGeometryError:
            continue
        inl = angular_residuals(src_a, dst_a, cand) < cfg.inlier_threshold
        count = int(inl.sum())
        if count > best_count:
            best_count = count
            best_inl = inl
            best_r = cand
    if best_count < cfg.sample_size:
        raise RobustFitError(
            f"no candidate reached {cfg.sample_size} inliers in {cfg.iterations} iterations"
        )
    try:
        refit = procrustes_rotation(src_a[best_inl], dst_a[best_inl])
    except DegenerateGeometryError:
        refit = best_r
    if cfg.refine_threshold is not None:
        keep = angular_residuals(src_a, dst_a, refit) < cfg.refine_threshold
        if keep.sum() >= cfg.sample_size:
            try:
                refined = procrustes_rotation(src_a[keep], dst_a[keep])
            except DegenerateGeometryError:
                pass
            else:
                refit = refined
                best_inl = angular_residuals(src_a, dst_a, refit) < cfg.inlier_threshold
                best_count = int(best_inl.sum())
    full_mask = np.zeros(m_all, dtype=bool)
    full_mask[active[best_inl]] = True
    return refit, full_mask, best_count / len(active)
