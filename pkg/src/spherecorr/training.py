"""Adam training of the encoder on projected feature maps.

Training rows are normalized with the same analytic (t, s) estimator that
inference uses, so the network trains under exactly the conditions it will
see, estimator bias included. Normalizing with ground truth instead is kept
behind use_gt_ts for ablation; it looks better on paper and worse at
inference, where no ground truth exists.

A training set is precomputed once per observation into stacked arrays
(features, assignment masks, gt canonical coordinates); steps then just
sample row indices. Everything is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import encoder, features, losses, projection, synth
from .errors import NumericError


@dataclass
class TrainConfig:
    steps: int = 5000
    batch_size: int = 16
    lr: float = 1e-3
    schedule: str = "cosine"  # or "constant"
    loss_kind: str = losses.DEFAULT_LOSS
    seed: int = 0
    clip_norm: float | None = 1.0
    include_unassigned: bool = True  # loss over all M anchors, not just assigned
    augment: bool = True
    augment_copies: int = 4  # training rows per observation when augmenting
    augment_t_range: float = 0.02
    augment_s_range: tuple = (0.8, 1.2)
    augment_rot_range: tuple = (-30.0, 30.0)
    use_gt_ts: bool = False  # ablation: normalize with ground-truth (t, s)
    layers: int = 2
    width: int = 32
    hidden: int = 64
    feature_k: int = 25


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """Annealed from lr0 to 0 over total_steps."""
    return 0.5 * lr0 * (1.0 + np.cos(np.pi * min(step, total_steps) / total_steps))


def adam_update(
    params: dict, grads: dict, state: AdamState, lr: float,
    beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
) -> dict:
    """One Adam step; mutates state, returns new params dict."""
    state.step += 1
    t = state.step
    out = {}
    for k, p in params.items():
        g = grads[k]
        m = state.m.get(k)
        if m is None:
            m = np.zeros_like(p)
            state.m[k] = m
            state.v[k] = np.zeros_like(p)
        v = state.v[k]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        out[k] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out


def clip_gradients(grads: dict, max_norm: float) -> dict:
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return grads
    factor = max_norm / total
    return {k: g * factor for k, g in grads.items()}


def batched_loss(o, o_gt, kind, masks=None):
    """Loss over a (B, M, 3) batch; returns (report, grad shaped like o)."""
    b, m, _ = o.shape
    weights = None
    if masks is not None:
        weights = np.asarray(masks, dtype=float).reshape(b * m)
    rep = losses.corr_loss(o.reshape(b * m, 3), o_gt.reshape(b * m, 3), kind, weights)
    return rep, rep.grad_wrt_o.reshape(b, m, 3)


def nocs_angle_deg(o: np.ndarray, o_gt: np.ndarray) -> float:
    dots = np.clip((o * o_gt).sum(axis=-1), -1.0, 1.0)
    return float(np.degrees(np.arccos(dots).mean()))


def train_step(
    params: dict,
    batch_f: np.ndarray,
    batch_gt: np.ndarray,
    state: AdamState,
    lr: float,
    loss_kind: str = losses.DEFAULT_LOSS,
    clip_norm: float | None = None,
    batch_masks: np.ndarray | None = None,
):
    """One optimizer step; returns (new params, metrics dict)."""
    o, cache, n_zero = encoder.forward(params, batch_f)
    rep, d_o = batched_loss(o, batch_gt, loss_kind, batch_masks)
    if not np.isfinite(rep.value):
        raise NumericError(f"non-finite loss at optimizer step {state.step + 1}")
    grads = encoder.backward(params, cache, d_o)
    if clip_norm is not None:
        grads = clip_gradients(grads, clip_norm)
    new_params = adam_update(params, grads, state, lr)
    metrics = {
        "loss": rep.value,
        "nocs_angle_deg": nocs_angle_deg(o, batch_gt),
        "zero_norm_rows": n_zero,
    }
    return new_params, metrics


def observation_to_training_row(obs, grid, feat_config, use_gt_ts=False):
    """(F^A, mask, O_gt) for one observation, estimator-normalized."""
    if use_gt_ts:
        t, s = obs.t, obs.s
    else:
        t, s = synth.estimate_ts(obs.points_cam)
    p = synth.normalize_points(obs.points_cam, t, s)
    feats = features.assemble_features(p, obs.colors, feat_config)
    fmap = projection.project_to_sphere(grid, p, feats.values)
    o_gt = projection.gt_spherical_nocs(obs.r, grid)
    return fmap.features, fmap.assigned_mask, o_gt


def prepare_training_set(observations, grid, cfg: TrainConfig):
    """Stacked (F, masks, O_gt) arrays over the observation list.

    With cfg.augment, each observation contributes augment_copies jittered
    variants instead of the raw one, seeded per (observation, copy); the
    pose variety is what keeps a small observation set from being
    memorized row-by-row.
    """
    feat_cfg = features.FeatureConfig(c=cfg.width, k=cfg.feature_k)
    f_rows, m_rows, gt_rows = [], [], []
    copies = cfg.augment_copies if cfg.augment else 1
    for i, obs in enumerate(observations):
        for copy in range(copies):
            variant = obs
            if cfg.augment:
                variant = synth.augment(
                    obs,
                    seed=cfg.seed * 100003 + i * 31 + copy,
                    t_range=cfg.augment_t_range,
                    s_range=cfg.augment_s_range,
                    rot_deg_range=cfg.augment_rot_range,
                )
            f, mask, gt = observation_to_training_row(variant, grid, feat_cfg, cfg.use_gt_ts)
            f_rows.append(f)
            m_rows.append(mask)
            gt_rows.append(gt)
    return np.stack(f_rows), np.stack(m_rows), np.stack(gt_rows)


def train(
    observations,
    grid,
    cfg: TrainConfig,
    params: dict | None = None,
    probe_every: int = 0,
    probe_fn=None,
):
    """Full training run; returns (params, history).

    history rows are dicts (step, lr, loss, nocs_angle_deg[, probe]); a
    probe_fn(params) -> float is evaluated every probe_every steps and can
    drive milestone comparisons between configurations.
    """
    f_all, m_all, gt_all = prepare_training_set(observations, grid, cfg)
    if params is None:
        params = encoder.init_params(cfg.seed, grid.m_cells, cfg.width, cfg.hidden, cfg.layers)
    state = AdamState()
    rng = np.random.default_rng(cfg.seed + 1)
    history = []
    masks = None if cfg.include_unassigned else m_all
    for step in range(cfg.steps):
        idx = rng.integers(0, len(f_all), size=cfg.batch_size)
        lr = cosine_lr(step, cfg.steps, cfg.lr) if cfg.schedule == "cosine" else cfg.lr
        try:
            params, metrics = train_step(
                params, f_all[idx], gt_all[idx], state, lr, cfg.loss_kind,
                cfg.clip_norm, None if masks is None else masks[idx],
            )
        except NumericError as exc:
            # train_step fails before the update, so params are still good.
            exc.last_params = params
            exc.history = history
            exc.aborted_at = step
            raise
        row = {"step": step, "lr": lr, **metrics}
        if probe_every and probe_fn is not None and (step + 1) % probe_every == 0:
            row["probe"] = float(probe_fn(params))
        history.append(row)
    return params, history


def history_to_csv(history, path) -> None:
    cols = ["step", "lr", "loss", "nocs_angle_deg"]
    extra = [k for k in history[0] if k not in cols] if history else []
    with open(path, "w") as f:
        f.write(",".join(cols + extra) + "\n")
        for row in history:
            vals = [row.get(k, "") for k in cols + extra]
            f.write(",".join(str(v) for v in vals) + "\n")
