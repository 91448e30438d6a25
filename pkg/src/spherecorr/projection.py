"""Point features onto sphere anchors, and the supervision targets.

Each normalized point lands in the grid cell of its direction; a cell keeps
the feature row of its largest-radius point (ties to the lowest point index)
and every unassigned cell is exactly zero with its mask cleared. The
ground-truth canonical coordinate for anchor A_m under rotation R is R^T A_m,
so a trained head plus a Procrustes solve can read R back off the sphere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grids as grids_mod


@dataclass(frozen=True)
class SphericalFeatureMap:
    grid: grids_mod.SphericalGrid
    features: np.ndarray  # (M, C)
    assigned_mask: np.ndarray  # (M,) bool
    source_index: np.ndarray  # (M,) int, -1 where unassigned


def project_to_sphere(
    grid: grids_mod.SphericalGrid, p: np.ndarray, feat_values: np.ndarray
) -> SphericalFeatureMap:
    """Max-radius anchor assignment of per-point features.

    p rows are normalized points (origin inside the object); feat_values is
    the row-aligned N x C feature matrix.
    """
    p = np.asarray(p, dtype=float)
    feat_values = np.asarray(feat_values, dtype=float)
    if p.ndim != 2 or p.shape[1] != 3 or len(p) == 0:
        raise ValueError("need a nonempty Nx3 point array")
    if len(feat_values) != len(p):
        raise ValueError("features must be row-aligned with points")

    radii = np.linalg.norm(p, axis=1)
    ok = radii > 0.0
    cells = np.full(len(p), -1, dtype=np.int64)
    cells[ok] = grids_mod.ang2pix(grid, p[ok])

    m = grid.m_cells
    best_radius = np.full(m, -1.0)
    # First pass: the winning radius per cell; second: its lowest point index.
    np.maximum.at(best_radius, cells[ok], radii[ok])
    source = np.full(m, len(p), dtype=np.int64)
    winners = ok & (radii == best_radius[cells])
    np.minimum.at(source, cells[winners], np.flatnonzero(winners))

    mask = source < len(p)
    source = np.where(mask, source, -1)
    features = np.zeros((m, feat_values.shape[1]))
    features[mask] = feat_values[source[mask]]
    return SphericalFeatureMap(grid, features, mask, source)


def gt_spherical_nocs(r_gt: np.ndarray, grid: grids_mod.SphericalGrid) -> np.ndarray:
    """Rows (R^T A_m) for every anchor; unit norm by isometry."""
    return grid.anchors @ np.asarray(r_gt, dtype=float)
