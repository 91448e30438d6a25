"""End-to-end inference: observation in, rotation out.

estimate (t, s) -> normalize -> invariant features -> project to anchors ->
encoder -> NOCS head -> RANSAC Procrustes between anchors and predictions.

Normalization uses the same analytic (t, s) estimator the training rows
were built with, so the network never faces a train/inference domain gap;
the estimator's calibration constants live next to it in the synthesizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import encoder, features, pose, projection, synth
from .errors import RobustFitError


@dataclass(frozen=True)
class InferenceConfig:
    feature: features.FeatureConfig = field(default_factory=features.FeatureConfig)
    ransac: pose.RansacConfig = field(default_factory=pose.RansacConfig)
    inflate: float = synth.DEFAULT_INFLATE
    view_shift: float = synth.DEFAULT_VIEW_SHIFT
    use_gt_ts: bool = False  # ablation/debug: normalize with ground truth
    # Fit the rotation only on anchors that captured surface points; the
    # unassigned rest carry interpolated features and dilute the consensus.
    assigned_only: bool = True


def predict_rotation(params: dict, obs: synth.Observation, grid, cfg: InferenceConfig):
    """(rotation, diagnostics) for one observation."""
    if cfg.use_gt_ts:
        t, s = obs.t, obs.s
    else:
        t, s = synth.estimate_ts(obs.points_cam, cfg.inflate, cfg.view_shift)
    p = synth.normalize_points(obs.points_cam, t, s)
    feats = features.assemble_features(p, obs.colors, cfg.feature)
    fmap = projection.project_to_sphere(grid, p, feats.values)
    f_enc = encoder.encoder_forward(params, fmap.features)
    o, n_zero = encoder.nocs_head(params, f_enc)
    mask = fmap.assigned_mask if cfg.assigned_only else None
    robust = True
    try:
        r, inliers, ratio = pose.ransac_rotation(grid.anchors, o, cfg.ransac, mask=mask)
    except RobustFitError:
        # No consensus set (typically an undertrained model). Score the
        # plain least-squares fit instead of aborting; ratio 0 flags it.
        robust = False
        r = pose.procrustes_rotation(
            grid.anchors if mask is None else grid.anchors[mask],
            o if mask is None else o[mask],
        )
        inliers = np.zeros(len(o), dtype=bool)
        ratio = 0.0
    diagnostics = {
        "robust_fit": robust,
        "o_pred": o,
        "inlier_ratio": ratio,
        "inlier_mask": inliers,
        "residuals": pose.angular_residuals(grid.anchors, o, r),
        "assigned_fraction": float(fmap.assigned_mask.mean()),
        "zero_norm_rows": n_zero,
        "t_est": t,
        "s_est": s,
    }
    return r, diagnostics
