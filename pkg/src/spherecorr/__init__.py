"""Rotation estimation from spherical correspondences.

Pipeline: synthesize observed point clouds -> rotation-invariant per-point
features -> project onto a sphere grid (one feature row per cell) -> attention
encoder predicts canonical (NOCS) coordinates per cell -> Procrustes/RANSAC
fits the rotation against the cell anchor directions.
"""

__version__ = "0.1.0"
