"""Per-point SO(3)-invariant features: color, radius, kNN-relative geometry.

The projection and encoder stages must see the same features no matter how
the observation is rotated, so nothing here may depend on absolute
coordinates: colors come from the synthesizer's canonical-frame scheme,
radius is the distance to the (normalized) origin, and local geometry uses
only distances to neighbors and color differences. An inject_xyz toggle
deliberately breaks the contract by overwriting the last channels with raw
coordinates; tests assert the invariance check then fails.

kNN ties are broken by lowest point index (stable sort), which matters only
on constructed-degenerate inputs; generic clouds have no exact ties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FeatureConfig:
    c: int = 32  # total channel count
    k: int = 25  # neighbor count; k + 3 == c - 4 keeps the map an identity
    inject_xyz: bool = False

    def __post_init__(self):
        if self.c < 8:
            raise ValueError("feature width c must be >= 8")
        if self.k < 1:
            raise ValueError("neighbor count k must be >= 1")


@dataclass(frozen=True)
class PointFeatures:
    values: np.ndarray  # (N, C)
    layout: dict  # name -> (start, stop) channel spans


def radius_feature(p: np.ndarray) -> np.ndarray:
    """Per-point distance to the origin, (N, 1)."""
    p = np.asarray(p, dtype=float)
    return np.linalg.norm(p, axis=1, keepdims=True)


def _knn(p: np.ndarray, k: int) -> np.ndarray:
    n = len(p)
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the point count {n}")
    sq = (p * p).sum(axis=1)
    d2 = np.clip(sq[:, None] + sq[None, :] - 2.0 * (p @ p.T), 0.0, None)
    np.fill_diagonal(d2, np.inf)
    part = np.argpartition(d2, k - 1, axis=1)[:, :k]
    # Index-ascending base plus a stable distance sort = the documented
    # lowest-index tie-breaking.
    part = np.sort(part, axis=1)
    rowd = np.take_along_axis(d2, part, axis=1)
    order = np.argsort(rowd, axis=1, kind="stable")
    return np.take_along_axis(part, order, axis=1)


def local_geometry_feature(
    p: np.ndarray, colors: np.ndarray, k: int, width: int | None = None
) -> np.ndarray:
    """Sorted kNN distances plus mean neighbor color difference, (N, width).

    Raw channels are [k sorted distances | 3 color-diff means]. When width
    is given and differs from k + 3, the distance block alone is passed
    through a fixed seeded linear map to width - 3 channels (the color-diff
    block is kept verbatim), so distance channels stay homogeneous of
    degree 1 in the point scale.
    """
    p = np.asarray(p, dtype=float)
    colors = np.asarray(colors, dtype=float)
    if len(p) != len(colors):
        raise ValueError("points and colors must align")
    nn = _knn(p, k)
    diffs = p[nn] - p[:, None, :]
    dists = np.sort(np.linalg.norm(diffs, axis=2), axis=1)
    cdiff = (colors[nn] - colors[:, None, :]).mean(axis=1)
    if width is None or width == k + 3:
        return np.concatenate([dists, cdiff], axis=1)
    if width < 4:
        raise ValueError("width must leave room for the 3 color channels")
    mix = _distance_mix_matrix(k, width - 3)
    return np.concatenate([dists @ mix, cdiff], axis=1)


def _distance_mix_matrix(k: int, out: int) -> np.ndarray:
    # Fixed for a given (k, out): reproducible across processes.
    rng = np.random.default_rng(np.random.SeedSequence(entropy=77, spawn_key=(k, out)))
    return rng.standard_normal((k, out)) / np.sqrt(k)


def assemble_features(
    p: np.ndarray, colors: np.ndarray, config: FeatureConfig = FeatureConfig()
) -> PointFeatures:
    """[colors | radius | local_geom] with the layout recorded."""
    p = np.asarray(p, dtype=float)
    colors = np.asarray(colors, dtype=float)
    if p.ndim != 2 or p.shape[1] != 3 or colors.shape != p.shape:
        raise ValueError("need matching Nx3 points and colors")
    local = local_geometry_feature(p, colors, config.k, width=config.c - 4)
    values = np.concatenate([colors, radius_feature(p), local], axis=1)
    if config.inject_xyz:
        # Ablation toggle: absolute coordinates ride along in the last
        # channels, which is exactly what the invariance contract forbids.
        values = values.copy()
        values[:, -3:] = p
    layout = {"color": (0, 3), "radius": (3, 4), "local_geom": (4, config.c)}
    return PointFeatures(values, layout)
