"""Command-line front door: synth | train | eval | grid-bench | loss-bench.

Every command is a pure function of (config, seed): reports carry the
config hash, seed, and commit id, and re-running a command writes
byte-identical outputs (no timestamps anywhere). Exit codes: 0 success,
2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import config as config_mod
from . import encoder, grids, losses, metrics, pipeline, pose, projection, synth, training
from .errors import ConfigError, DataError, NumericError


def current_commit() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.TimeoutExpired):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 else "unknown"


def _dataset_dir(cfg):
    return os.path.join(cfg.output.dir, "dataset")


def _dataset_paths(cfg):
    d = _dataset_dir(cfg)
    return os.path.join(d, "train.jsonl"), os.path.join(d, "test.jsonl"), os.path.join(d, "manifest.json")


def _file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _split_counts(total: int, categories) -> dict:
    base, rem = divmod(total, len(categories))
    return {cat: base + (1 if i < rem else 0) for i, cat in enumerate(categories)}


def _make_split(cfg, split_index: int, total: int, noise: float):
    observations = []
    counts = _split_counts(total, cfg.data.categories)
    for ci, cat in enumerate(cfg.data.categories):
        seed = int(
            np.random.SeedSequence((cfg.training.seed, split_index, ci)).generate_state(1)[0]
        )
        observations.extend(
            synth.make_dataset(counts[cat], seed, (cat,), noise, cfg.data.shape_points)
        )
    # make_dataset numbers instances per call; renumber across the split.
    return [replace(obs, instance=i) for i, obs in enumerate(observations)], counts


def cmd_synth(cfg, args) -> int:
    os.makedirs(_dataset_dir(cfg), exist_ok=True)
    train_path, test_path, manifest_path = _dataset_paths(cfg)
    train_obs, train_counts = _make_split(cfg, 0, cfg.data.train_instances, cfg.data.noise_sigma)
    test_obs, test_counts = _make_split(cfg, 1, cfg.data.test_instances, cfg.data.test_noise_sigma)
    synth.save_dataset(train_path, train_obs)
    synth.save_dataset(test_path, test_obs)
    manifest = {
        "schema_version": 1,
        "config_hash": cfg.config_hash(),
        "seed": cfg.training.seed,
        "counts": {"train": train_counts, "test": test_counts},
        "records": {"train": len(train_obs), "test": len(test_obs)},
        "hash": hashlib.sha256(
            (_file_sha256(train_path) + _file_sha256(test_path)).encode()
        ).hexdigest(),
    }
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"dataset: {len(train_obs)} train / {len(test_obs)} test records")
    print(f"manifest hash {manifest['hash'][:16]} -> {manifest_path}")
    return 0


def _require(path, what: str):
    if not os.path.exists(path):
        raise DataError(f"{what} not found at {path}; run the earlier pipeline stage first")
    return path


def _checkpoint_path(cfg):
    return os.path.join(cfg.output.dir, "checkpoint.npz")


def cmd_train(cfg, args) -> int:
    train_path, _, _ = _dataset_paths(cfg)
    observations = synth.load_dataset(_require(train_path, "training split"))
    grid = cfg.build_grid()
    tc = cfg.train_config()
    meta = {
        "config_hash": cfg.config_hash(),
        "seed": tc.seed,
        "steps": tc.steps,
        "commit": current_commit(),
    }
    os.makedirs(cfg.output.dir, exist_ok=True)
    try:
        params, history = training.train(observations, grid, tc)
    except NumericError as exc:
        last = getattr(exc, "last_params", None)
        if last is not None:
            path = os.path.join(cfg.output.dir, "checkpoint_lastgood.npz")
            encoder.save_params(path, last, {**meta, "aborted_at": getattr(exc, "aborted_at", -1)})
            print(f"aborted: {exc}; last good parameters saved to {path}", file=sys.stderr)
        raise
    encoder.save_params(_checkpoint_path(cfg), params, meta)
    training.history_to_csv(history, os.path.join(cfg.output.dir, "history.csv"))
    if history:
        last = history[-1]
        print(f"trained {tc.steps} steps; final loss {last['loss']:.4f}, "
              f"batch NOCS angle {last['nocs_angle_deg']:.1f} deg")
    else:
        print("trained 0 steps; checkpoint is the seeded initialization")
    print(f"checkpoint -> {_checkpoint_path(cfg)}")
    return 0


def _predict_one(params, obs, grid, icfg, oracle: bool):
    o_gt = projection.gt_spherical_nocs(obs.r, grid)
    if oracle:
        r, inliers, ratio = pose.ransac_rotation(grid.anchors, o_gt, icfg.ransac)
        t_pred, s_pred = obs.t, obs.s
        o_pred = o_gt
        diag = {"inlier_ratio": ratio}
    else:
        r, diag = pipeline.predict_rotation(params, obs, grid, icfg)
        t_pred, s_pred = diag["t_est"], diag["s_est"]
        o_pred = diag["o_pred"]
    return metrics.PoseResult(
        r_pred=r,
        t_pred=np.asarray(t_pred, dtype=float),
        s_pred=np.abs(np.asarray(s_pred, dtype=float)),
        r_gt=obs.r,
        t_gt=obs.t,
        s_gt=obs.s,
        category=obs.category,
        instance=obs.instance,
        o_pred=o_pred,
        o_gt=o_gt,
        diagnostics={"inlier_ratio": diag.get("inlier_ratio", 1.0)},
    )


def cmd_eval(cfg, args) -> int:
    _, test_path, _ = _dataset_paths(cfg)
    observations = synth.load_dataset(_require(test_path, "test split"))
    grid = cfg.build_grid()
    oracle = bool(args.oracle_mode)
    if oracle:
        params = None
    else:
        params, _ = encoder.load_params(_require(_checkpoint_path(cfg), "checkpoint"))
    icfg = pipeline.InferenceConfig(feature=cfg.feature_config(), ransac=cfg.ransac_config())

    def one(obs):
        return _predict_one(params, obs, grid, icfg, oracle)

    if args.threads and args.threads > 1:
        # Instances are independent; map preserves order so the reduction
        # is deterministic whatever the thread count.
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(one, observations))
    else:
        results = [one(obs) for obs in observations]

    table = metrics.compute_metric_table(results, seed=cfg.training.seed)
    metadata = {
        "commit": current_commit(),
        "config_hash": cfg.config_hash(),
        "oracle_mode": oracle,
        "seed": cfg.training.seed,
    }
    json_path, csv_path = metrics.write_report(table, metadata, cfg.output.dir, "eval")
    rot_errs = [metrics.rotation_error_deg(res) for res in results]
    print(f"evaluated {len(results)} instances; mean rotation error "
          f"{np.mean(rot_errs):.2f} deg, median {np.median(rot_errs):.2f} deg")
    mean = table.mean_row()
    print("  " + "  ".join(f"{c}={mean[c]:.1f}" for c in metrics.METRIC_COLUMNS[:7]))
    print(f"reports -> {json_path}, {csv_path}")
    return 0


def _bench_grids(cfg):
    b = cfg.bench
    return (
        ("healpix", grids.build_grid("healpix", b.healpix_nside)),
        ("equirect", grids.build_grid("equirect", b.equirect_n)),
        ("fibonacci", grids.build_grid("fibonacci", b.fibonacci_n)),
    )


def cmd_grid_bench(cfg, args) -> int:
    sample_obs = []
    rng = np.random.default_rng(cfg.training.seed)
    for i in range(cfg.bench.observations):
        cat = cfg.data.categories[i % len(cfg.data.categories)]
        shape = synth.make_shape(
            cat, synth.sample_shape_params(cat, rng), cfg.data.shape_points, seed=i
        )
        sample_obs.append(synth.make_observation(shape, rng, noise_sigma=0.0))

    rows = []
    for kind, grid in _bench_grids(cfg):
        stats = grids.solid_angle_stats(grid, cfg.bench.mc_samples, seed=cfg.training.seed)
        coverages = []
        for obs in sample_obs:
            t, s = synth.estimate_ts(obs.points_cam)
            p = synth.normalize_points(obs.points_cam, t, s)
            fmap = projection.project_to_sphere(grid, p, np.ones((len(p), 1)))
            coverages.append(float(fmap.assigned_mask.mean()))
        rows.append(
            {
                "kind": kind,
                "m_cells": grid.m_cells,
                "solid_angle_ratio": stats.max_min_ratio,
                "coverage_mean": float(np.mean(coverages)),
                "coverage_min": float(np.min(coverages)),
                "coverage_max": float(np.max(coverages)),
            }
        )

    os.makedirs(cfg.output.dir, exist_ok=True)
    metadata = {
        "commit": current_commit(),
        "config_hash": cfg.config_hash(),
        "mc_samples": cfg.bench.mc_samples,
        "seed": cfg.training.seed,
    }
    json_path = os.path.join(cfg.output.dir, "grid_bench.json")
    with open(json_path, "w") as f:
        json.dump({"schema_version": 1, "metadata": metadata, "rows": rows}, f, indent=2, sort_keys=True)
        f.write("\n")
    csv_path = os.path.join(cfg.output.dir, "grid_bench.csv")
    with open(csv_path, "w") as f:
        for k in sorted(metadata):
            f.write(f"# {k}={metadata[k]}\n")
        cols = ["kind", "m_cells", "solid_angle_ratio", "coverage_mean", "coverage_min", "coverage_max"]
        f.write(",".join(cols) + "\n")
        for row in rows:
            f.write(",".join(
                row["kind"] if c == "kind" else (str(row[c]) if c == "m_cells" else f"{row[c]:.6f}")
                for c in cols
            ) + "\n")
    for row in rows:
        print(f"{row['kind']:>10}: M={row['m_cells']:<4} area ratio {row['solid_angle_ratio']:.3f} "
              f"coverage {row['coverage_mean']:.2f}")
    print(f"reports -> {json_path}, {csv_path}")
    return 0


def cmd_loss_bench(cfg, args) -> int:
    e = np.linspace(0.0, 1.0, 1001)
    kinds = list(config_mod.LOSS_KINDS)
    curves = {kind: losses.loss_curve(kind, e) for kind in kinds}
    os.makedirs(cfg.output.dir, exist_ok=True)
    csv_path = os.path.join(cfg.output.dir, "loss_bench.csv")
    with open(csv_path, "w") as f:
        f.write(f"# commit={current_commit()}\n")
        f.write(f"# config_hash={cfg.config_hash()}\n")
        header = ["e"]
        for kind in kinds:
            header += [kind, f"{kind}_grad"]
        f.write(",".join(header) + "\n")
        for i in range(len(e)):
            cells = [f"{e[i]:.3f}"]
            for kind in kinds:
                val, grad = curves[kind]
                cells += [f"{val[i]:.10g}", f"{grad[i]:.10g}"]
            f.write(",".join(cells) + "\n")
    print(f"tabulated {len(kinds)} loss kinds over {len(e)} error values")
    print(f"report -> {csv_path}")
    return 0


def _apply_overrides(cfg, args):
    raw = cfg.to_dict()
    if args.seed is not None:
        raw["training"]["seed"] = args.seed
    if args.out is not None:
        raw["output"]["dir"] = args.out
    if args.loss is not None:
        raw["training"]["loss_kind"] = args.loss
    if args.grid is not None:
        kind, sep, res = args.grid.partition(":")
        raw["grid"]["kind"] = kind
        if sep:
            try:
                raw["grid"]["resolution"] = (
                    [int(v) for v in res.split("x")] if "x" in res else int(res)
                )
            except ValueError as exc:
                raise ConfigError(f"bad --grid resolution {res!r}") from exc
    return config_mod.from_dict(raw)


def _load_config(args):
    if args.config is None:
        return config_mod.load_preset("desk")
    if os.path.exists(args.config):
        return config_mod.load(args.config)
    if os.sep not in args.config and not args.config.endswith(".toml"):
        return config_mod.load_preset(args.config)
    raise ConfigError(f"config file not found: {args.config}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spherecorr",
        description="Category-level rotation estimation via spherical correspondences.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file path or preset name (default preset: desk)")
    common.add_argument("--seed", type=int, help="override training.seed")
    common.add_argument("--out", help="override output.dir")
    common.add_argument("--threads", type=int, default=1, help="worker threads for evaluation")
    common.add_argument("--oracle-mode", action="store_true",
                        help="eval only: feed ground-truth correspondences to the solver")
    common.add_argument("--grid", help="override grid, e.g. healpix:4, equirect:14x14")
    common.add_argument("--loss", help="override training.loss_kind")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="render the train/test dataset")
    sub.add_parser("train", parents=[common], help="train the encoder on the train split")
    sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on the test split")
    sub.add_parser("grid-bench", parents=[common], help="compare sphere grids")
    sub.add_parser("loss-bench", parents=[common], help="tabulate loss curves and gradients")
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "grid-bench": cmd_grid_bench,
    "loss-bench": cmd_loss_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        cfg = _apply_overrides(cfg, args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
