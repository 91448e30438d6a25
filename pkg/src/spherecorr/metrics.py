"""Pose accuracy, oriented-box IoU, NOCS errors, and report serialization.

Thresholded metrics are percentages in [0, 100]; translations are meters
internally (thresholds named in cm only in column labels). The oriented-box
IoU is Monte-Carlo: exact polytope clipping buys little here since the
axis-aligned case provides an analytic oracle for the estimator and the
sample count is a caller-visible knob with a known convergence rate.

Rotation error is the plain geodesic angle by default. Rotationally
symmetric categories arguably deserve an axis-symmetric error (angle
between mapped symmetry axes); that variant is available per category via
symmetry_axes but is off by default.
"""

from __future__ import annotations

import itertools
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import so3

IOU_THRESHOLDS = (0.25, 0.50, 0.75)
POSE_THRESHOLDS = ((5.0, 0.02), (5.0, 0.05), (10.0, 0.02), (10.0, 0.05))
METRIC_COLUMNS = (
    "iou25",
    "iou50",
    "iou75",
    "acc_5deg_2cm",
    "acc_5deg_5cm",
    "acc_10deg_2cm",
    "acc_10deg_5cm",
    "nocs_angle_deg",
    "nocs_distance",
)
PERCENT_COLUMNS = METRIC_COLUMNS[:7]
SCHEMA_VERSION = 1
MIN_IOU_SAMPLES = 100_000


@dataclass(frozen=True)
class PoseResult:
    r_pred: np.ndarray
    t_pred: np.ndarray
    s_pred: np.ndarray
    r_gt: np.ndarray
    t_gt: np.ndarray
    s_gt: np.ndarray
    category: str
    instance: int = 0
    o_pred: np.ndarray | None = None  # (M, 3) predicted spherical NOCS
    o_gt: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        so3.check_rotation(self.r_pred)
        so3.check_rotation(self.r_gt)
        if np.any(np.asarray(self.s_pred) <= 0) or np.any(np.asarray(self.s_gt) <= 0):
            raise ValueError("box sizes must be positive")


def rotation_error_deg(res: PoseResult, symmetry_axis=None) -> float:
    """Geodesic angle, or the angle between mapped symmetry axes."""
    if symmetry_axis is None:
        return float(np.degrees(so3.geodesic_angle(res.r_pred, res.r_gt)))
    a = np.asarray(symmetry_axis, dtype=float)
    a = a / np.linalg.norm(a)
    dot = float(np.clip((res.r_pred @ a) @ (res.r_gt @ a), -1.0, 1.0))
    return float(np.degrees(np.arccos(dot)))


def translation_error_m(res: PoseResult) -> float:
    return float(np.linalg.norm(np.asarray(res.t_pred) - np.asarray(res.t_gt)))


def pose_accuracy(
    results, rot_thresh_deg: float, trans_thresh_m: float, symmetry_axes: dict | None = None
) -> float:
    """Percent of results under both thresholds at once."""
    results = list(results)
    if not results:
        raise ValueError("pose_accuracy needs at least one result")
    hits = 0
    for res in results:
        axis = (symmetry_axes or {}).get(res.category)
        if (
            rotation_error_deg(res, axis) < rot_thresh_deg
            and translation_error_m(res) < trans_thresh_m
        ):
            hits += 1
    return 100.0 * hits / len(results)


def _box_corners(r, t, size):
    half = 0.5 * np.asarray(size, dtype=float)
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))
    return (signs * half) @ np.asarray(r).T + np.asarray(t)


def _inside(points, r, t, size):
    local = (points - np.asarray(t)) @ np.asarray(r)  # rows R^T (p - t)
    return np.all(np.abs(local) <= 0.5 * np.asarray(size, dtype=float), axis=1)


def box_iou_3d(pose_a, pose_b, size_a, size_b, n_samples: int = MIN_IOU_SAMPLES, seed: int = 0) -> float:
    """Monte-Carlo IoU of two oriented boxes; poses are (R, t) pairs.

    Samples uniformly over the joint axis-aligned bounding box, so disjoint
    boxes give exactly 0 and identical boxes exactly 1.
    """
    if n_samples < MIN_IOU_SAMPLES:
        raise ValueError(f"n_samples must be >= {MIN_IOU_SAMPLES}")
    size_a = np.asarray(size_a, dtype=float)
    size_b = np.asarray(size_b, dtype=float)
    if np.any(size_a <= 0) or np.any(size_b <= 0):
        raise ValueError("box sizes must be positive")
    r_a, t_a = pose_a
    r_b, t_b = pose_b
    corners = np.vstack([_box_corners(r_a, t_a, size_a), _box_corners(r_b, t_b, size_b)])
    lo = corners.min(axis=0)
    hi = corners.max(axis=0)
    rng = np.random.default_rng(seed)
    points = rng.uniform(lo, hi, size=(int(n_samples), 3))
    in_a = _inside(points, r_a, t_a, size_a)
    in_b = _inside(points, r_b, t_b, size_b)
    union = int((in_a | in_b).sum())
    if union == 0:
        return 0.0
    return float((in_a & in_b).sum() / union)


def mean_nocs_errors(o_pred: np.ndarray, o_gt: np.ndarray) -> tuple[float, float]:
    """(mean angle in degrees, mean euclidean distance) over all rows."""
    o_pred = np.asarray(o_pred, dtype=float)
    o_gt = np.asarray(o_gt, dtype=float)
    if o_pred.shape != o_gt.shape or o_pred.shape[-1] != 3:
        raise ValueError("need row-aligned (..., 3) arrays")
    p = o_pred.reshape(-1, 3)
    g = o_gt.reshape(-1, 3)
    dots = np.clip((p * g).sum(axis=1), -1.0, 1.0)
    angle = float(np.degrees(np.arccos(dots).mean()))
    dist = float(np.linalg.norm(p - g, axis=1).mean())
    return angle, dist


@dataclass(frozen=True)
class MetricTable:
    categories: tuple
    rows: dict  # category -> {column -> float}

    def __post_init__(self):
        for cat in self.categories:
            row = self.rows[cat]
            for col in METRIC_COLUMNS:
                v = row[col]
                if not np.isfinite(v):
                    raise ValueError(f"non-finite metric {col} for {cat}")
                if col in PERCENT_COLUMNS and not 0.0 <= v <= 100.0:
                    raise ValueError(f"percentage {col} out of range for {cat}: {v}")

    def mean_row(self) -> dict:
        return {
            col: float(np.mean([self.rows[cat][col] for cat in self.categories]))
            for col in METRIC_COLUMNS
        }


def compute_metric_table(
    results,
    iou_samples: int = MIN_IOU_SAMPLES,
    seed: int = 0,
    symmetry_axes: dict | None = None,
) -> MetricTable:
    """Aggregate PoseResults into the per-category metric table."""
    results = list(results)
    if not results:
        raise ValueError("no results to aggregate")
    categories = tuple(sorted({res.category for res in results}))
    rows = {}
    for cat in categories:
        subset = [res for res in results if res.category == cat]
        row = {}
        ious = [
            box_iou_3d(
                (res.r_pred, res.t_pred),
                (res.r_gt, res.t_gt),
                res.s_pred,
                res.s_gt,
                iou_samples,
                seed + res.instance,
            )
            for res in subset
        ]
        for thr, col in zip(IOU_THRESHOLDS, METRIC_COLUMNS[:3]):
            row[col] = 100.0 * float(np.mean([iou > thr for iou in ious]))
        for (rot, trans), col in zip(POSE_THRESHOLDS, METRIC_COLUMNS[3:7]):
            row[col] = pose_accuracy(subset, rot, trans, symmetry_axes)
        with_nocs = [res for res in subset if res.o_pred is not None and res.o_gt is not None]
        if with_nocs:
            angle, dist = mean_nocs_errors(
                np.stack([res.o_pred for res in with_nocs]),
                np.stack([res.o_gt for res in with_nocs]),
            )
        else:
            angle, dist = 0.0, 0.0
        row["nocs_angle_deg"] = angle
        row["nocs_distance"] = dist
        rows[cat] = row
    return MetricTable(categories, rows)


def _format_value(v: float) -> str:
    return f"{v:.6f}"


def write_report(table: MetricTable, metadata: dict, out_dir, basename: str = "report"):
    """JSON and CSV reports; returns (json_path, csv_path).

    Output bytes are a pure function of (table, metadata): keys are sorted
    and floats fixed-format, so reruns diff clean. CSV metadata rides in
    '#' comment lines; golden comparisons should strip those (the commit id
    changes between commits, the data rows must not).
    """
    os.makedirs(out_dir, exist_ok=True)
    mean = table.mean_row()
    payload = {
        "schema_version": SCHEMA_VERSION,
        "metadata": {str(k): metadata[k] for k in sorted(metadata)},
        "categories": list(table.categories),
        "rows": {cat: table.rows[cat] for cat in table.categories},
        "mean": mean,
    }
    json_path = os.path.join(out_dir, f"{basename}.json")
    with open(json_path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    csv_path = os.path.join(out_dir, f"{basename}.csv")
    with open(csv_path, "w") as f:
        f.write(f"# schema_version={SCHEMA_VERSION}\n")
        for k in sorted(metadata):
            f.write(f"# {k}={metadata[k]}\n")
        f.write("category," + ",".join(METRIC_COLUMNS) + "\n")
        for cat in table.categories:
            row = table.rows[cat]
            f.write(cat + "," + ",".join(_format_value(row[c]) for c in METRIC_COLUMNS) + "\n")
        f.write("mean," + ",".join(_format_value(mean[c]) for c in METRIC_COLUMNS) + "\n")
    return json_path, csv_path


def read_report(json_path) -> tuple[MetricTable, dict]:
    """Inverse of write_report's JSON half."""
    with open(json_path) as f:
        payload = json.load(f)
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema: {payload.get('schema_version')}")
    table = MetricTable(tuple(payload["categories"]), payload["rows"])
    return table, payload["metadata"]
