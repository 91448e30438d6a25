"""Synthetic object categories with known ground-truth pose.

Three parametric families give intra-class shape variation: bottles (surface
of revolution with a shoulder taper), mugs (cylinder body plus a torus-arc
handle), and boxes (six faces sampled by area). Shapes are canonicalized the
NOCS way: bounding-box center at the origin, bounding-box diagonal scaled to
exactly 1, so every canonical point lies in [-0.5, 0.5]^3.

An observation places the canonical shape in the camera frame as

    points_cam = ||s||_2 * (R @ x) + t

with s the metric bounding-box dimensions (s = ||s||_2 * canonical extents,
so the diagonal is the single scale factor and (points_cam - t)/||s||_2
recovers R @ x exactly). Self-occlusion is simulated by back-face culling
against the viewpoint direction plus an orthographic 64x64 depth buffer that
keeps, per bin, only points within a small depth tolerance of the nearest.

Colors are semantic and strictly pose-independent: a per-part hue blended
with a gradient over the canonical coordinates, assigned once in the
canonical frame. They are the signal that makes canonical coordinates
learnable from a rotated observation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import json

import numpy as np

from . import so3
from .errors import DataError

CATEGORIES = ("bottle", "mug", "box")

N_OBS_POINTS = 2048
MIN_VISIBLE = 32
DEPTH_BINS = 64
DEPTH_TOL_FRAC = 0.02  # of the bbox diagonal
DEFAULT_NOISE_SIGMA = 0.002  # meters, ~2 mm at 0.2 m object scale

# Analytic (t, s) estimator calibration, fit on 120 noiseless renders across
# all categories. The camera-frame AABB of a rotated object is larger than
# its oriented box (rotation inflates extents more than self-occlusion
# shrinks them), hence inflate < 1; the visible-side centroid sits toward
# the camera by ~0.12 of the raw diagonal, hence the view-ray shift.
DEFAULT_INFLATE = 0.85
DEFAULT_VIEW_SHIFT = 0.143

PARAM_RANGES = {
    "bottle": {"aspect": (1.2, 3.0), "neck_ratio": (0.25, 0.6), "shoulder": (0.55, 0.8)},
    "mug": {"aspect": (0.8, 1.4), "handle_radius": (0.35, 0.7), "handle_tube": (0.08, 0.18)},
    "box": {"ext_x": (0.2, 1.0), "ext_y": (0.2, 1.0), "ext_z": (0.2, 1.0)},
}

_PART_HUES = {
    ("bottle", 0): (0.75, 0.25, 0.20),  # body
    ("bottle", 1): (0.15, 0.45, 0.85),  # neck
    ("bottle", 2): (0.90, 0.85, 0.20),  # caps
    ("mug", 0): (0.20, 0.45, 0.80),  # body
    ("mug", 1): (0.90, 0.60, 0.15),  # handle
    ("mug", 2): (0.30, 0.75, 0.35),  # bottom
    ("box", 0): (0.85, 0.30, 0.25),
    ("box", 1): (0.25, 0.60, 0.85),
    ("box", 2): (0.30, 0.80, 0.35),
    ("box", 3): (0.90, 0.80, 0.25),
    ("box", 4): (0.70, 0.35, 0.80),
    ("box", 5): (0.40, 0.75, 0.75),
}


@dataclass(frozen=True)
class ShapeModel:
    category: str
    shape_params: dict
    points: np.ndarray  # (K, 3) canonical coordinates in [-0.5, 0.5]^3
    colors: np.ndarray  # (K, 3) in [0, 1]
    normals: np.ndarray  # (K, 3) unit outward normals, canonical frame
    parts: np.ndarray  # (K,) small int part labels

    @property
    def extents(self) -> np.ndarray:
        return self.points.max(axis=0) - self.points.min(axis=0)


@dataclass(frozen=True)
class Observation:
    points_cam: np.ndarray  # (N, 3) meters
    colors: np.ndarray  # (N, 3)
    r: np.ndarray  # (3, 3) ground truth
    t: np.ndarray  # (3,) meters
    s: np.ndarray  # (3,) metric bbox dimensions; ||s|| is the scale factor
    category: str
    instance: int
    viewpoint: np.ndarray  # (3,) unit, object -> camera
    n_visible: int  # surviving points before resampling to N
    source_index: np.ndarray  # (N,) indices into the generating ShapeModel


def sample_shape_params(category: str, rng: np.random.Generator) -> dict:
    """Uniform draw from the documented per-category parameter ranges."""
    ranges = PARAM_RANGES[category]
    return {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in ranges.items()}


def make_shape(category: str, shape_params: dict, k_points: int = 4096, seed: int = 0) -> ShapeModel:
    """Sample a canonical shape surface, deterministically for (params, seed)."""
    if category not in CATEGORIES:
        raise ValueError(f"unknown category: {category!r}")
    ranges = PARAM_RANGES[category]
    if set(shape_params) != set(ranges):
        raise ValueError(f"{category} expects parameters {sorted(ranges)}")
    for k, v in shape_params.items():
        lo, hi = ranges[k]
        if not lo <= v <= hi:
            raise ValueError(f"{category}.{k}={v} outside [{lo}, {hi}]")
    if k_points < 64:
        raise ValueError("k_points must be >= 64")
    rng = np.random.default_rng(seed)
    if category == "bottle":
        pts, normals, parts = _sample_bottle(shape_params, k_points, rng)
    elif category == "mug":
        pts, normals, parts = _sample_mug(shape_params, k_points, rng)
    else:
        pts, normals, parts = _sample_box(shape_params, k_points, rng)

    # Canonicalize: bbox center to origin, bbox diagonal to exactly 1.
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    pts = pts - (lo + hi) / 2.0
    diag = float(np.linalg.norm(hi - lo))
    pts /= diag
    colors = _semantic_colors(category, pts, parts)
    return ShapeModel(category, dict(shape_params), pts, colors, normals, parts)


def _semantic_colors(category, pts_canonical, parts):
    # Part hue anchors the semantics; the canonical-position gradient makes
    # every surface location chromatically distinct, so color alone pins
    # down where on the object a point sits regardless of pose.
    hues = np.array([_PART_HUES[(category, int(p))] for p in parts])
    gradient = pts_canonical + 0.5
    return np.clip(0.35 * hues + 0.65 * gradient, 0.0, 1.0)


def _sample_bottle(params, k, rng):
    aspect = params["aspect"]
    neck_ratio = params["neck_ratio"]
    shoulder = params["shoulder"]
    r_body, height, band = 0.5, aspect, 0.15

    def profile(u):
        w = np.clip((u - shoulder) / band, 0.0, 1.0)
        smooth = 0.5 - 0.5 * np.cos(np.pi * w)
        r = r_body * (1.0 + (neck_ratio - 1.0) * smooth)
        inside = (u > shoulder) & (u < shoulder + band)
        dr = np.where(
            inside,
            r_body * (neck_ratio - 1.0) * 0.5 * np.pi * np.sin(np.pi * w) / band,
            0.0,
        )
        return r, dr

    # Area split between lateral wall and the two end caps.
    grid = np.linspace(0.0, 1.0, 2049)
    rg, drg = profile(grid)
    w_lat = rg * np.sqrt(height**2 + drg**2)
    area_lat = 2.0 * np.pi * np.trapezoid(w_lat, grid)
    area_bot = np.pi * r_body**2
    area_top = np.pi * (r_body * neck_ratio) ** 2
    counts = _split_counts(np.array([area_lat, area_bot, area_top]), k, rng)

    u = _sample_density(grid, w_lat, counts[0], rng)
    r, dr = profile(u)
    phi = rng.uniform(0.0, 2.0 * np.pi, counts[0])
    lateral = np.stack([r * np.cos(phi), r * np.sin(phi), height * (u - 0.5)], axis=1)
    n_lat = np.stack([height * np.cos(phi), height * np.sin(phi), -dr], axis=1)
    n_lat /= np.linalg.norm(n_lat, axis=1, keepdims=True)

    bot = _sample_disk(r_body, counts[1], rng)
    bottom = np.column_stack([bot, np.full(counts[1], -height / 2.0)])
    top_r = _sample_disk(r_body * neck_ratio, counts[2], rng)
    top = np.column_stack([top_r, np.full(counts[2], height / 2.0)])

    pts = np.concatenate([lateral, bottom, top])
    normals = np.concatenate(
        [
            n_lat,
            np.tile([0.0, 0.0, -1.0], (counts[1], 1)),
            np.tile([0.0, 0.0, 1.0], (counts[2], 1)),
        ]
    )
    parts = np.concatenate(
        [
            np.where(u > shoulder, 1, 0),
            np.full(counts[1], 2),
            np.full(counts[2], 2),
        ]
    )
    return pts, normals, parts


def _sample_mug(params, k, rng):
    aspect = params["aspect"]
    r_body = 0.5
    height = aspect * 2.0 * r_body
    r_handle = params["handle_radius"] * r_body
    r_tube = params["handle_tube"] * r_body
    beta_max = 0.75 * np.pi

    area_wall = 2.0 * np.pi * r_body * height
    area_bot = np.pi * r_body**2
    area_handle = 2.0 * beta_max * r_handle * 2.0 * np.pi * r_tube
    counts = _split_counts(np.array([area_wall, area_bot, area_handle]), k, rng)

    phi = rng.uniform(0.0, 2.0 * np.pi, counts[0])
    z = rng.uniform(-height / 2.0, height / 2.0, counts[0])
    wall = np.stack([r_body * np.cos(phi), r_body * np.sin(phi), z], axis=1)
    n_wall = np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], axis=1)

    bot = _sample_disk(r_body, counts[1], rng)
    bottom = np.column_stack([bot, np.full(counts[1], -height / 2.0)])

    # Handle: torus arc in the x-z plane, tube frame (cos g * N + sin g * y).
    beta = rng.uniform(-beta_max, beta_max, counts[2])
    gamma = _sample_torus_gamma(r_tube / r_handle, counts[2], rng)
    n_path = np.stack([np.cos(beta), np.zeros_like(beta), np.sin(beta)], axis=1)
    path = np.array([r_body, 0.0, 0.0]) + r_handle * n_path
    n_tube = np.cos(gamma)[:, None] * n_path
    n_tube[:, 1] = np.sin(gamma)
    handle = path + r_tube * n_tube

    pts = np.concatenate([wall, bottom, handle])
    normals = np.concatenate(
        [n_wall, np.tile([0.0, 0.0, -1.0], (counts[1], 1)), n_tube]
    )
    parts = np.concatenate(
        [np.zeros(counts[0]), np.full(counts[1], 2), np.ones(counts[2])]
    ).astype(int)
    return pts, normals, parts


def _sample_box(params, k, rng):
    e = np.array([params["ext_x"], params["ext_y"], params["ext_z"]])
    a, b, c = e
    face_areas = np.array([b * c, b * c, a * c, a * c, a * b, a * b])
    counts = _split_counts(face_areas, k, rng)
    pts, normals, parts = [], [], []
    for face in range(6):
        axis = face // 2
        sign = 1.0 if face % 2 == 0 else -1.0
        n = counts[face]
        uv_axes = [i for i in range(3) if i != axis]
        p = np.zeros((n, 3))
        p[:, axis] = sign * e[axis] / 2.0
        p[:, uv_axes[0]] = rng.uniform(-e[uv_axes[0]] / 2.0, e[uv_axes[0]] / 2.0, n)
        p[:, uv_axes[1]] = rng.uniform(-e[uv_axes[1]] / 2.0, e[uv_axes[1]] / 2.0, n)
        nrm = np.zeros((n, 3))
        nrm[:, axis] = sign
        pts.append(p)
        normals.append(nrm)
        parts.append(np.full(n, face))
    return np.concatenate(pts), np.concatenate(normals), np.concatenate(parts).astype(int)


def _split_counts(areas, k, rng):
    # Largest-remainder apportionment of k samples proportional to area.
    frac = areas / areas.sum()
    counts = np.floor(frac * k).astype(int)
    short = k - counts.sum()
    order = np.argsort(-(frac * k - counts))
    counts[order[:short]] += 1
    return counts


def _sample_density(grid, weights, n, rng):
    # Draw grid cells by trapezoid weight, jitter within the cell.
    centers = (grid[:-1] + grid[1:]) / 2.0
    w = (weights[:-1] + weights[1:]) / 2.0
    idx = rng.choice(len(centers), size=n, p=w / w.sum())
    du = grid[1] - grid[0]
    return centers[idx] + rng.uniform(-du / 2.0, du / 2.0, n)


def _sample_disk(radius, n, rng):
    rr = radius * np.sqrt(rng.uniform(0.0, 1.0, n))
    th = rng.uniform(0.0, 2.0 * np.pi, n)
    return np.stack([rr * np.cos(th), rr * np.sin(th)], axis=1)


def _sample_torus_gamma(ratio, n, rng):
    # Tube angle density proportional to 1 + ratio*cos(gamma); rejection.
    out = np.empty(0)
    while len(out) < n:
        g = rng.uniform(-np.pi, np.pi, 2 * (n - len(out)) + 8)
        accept = rng.uniform(0.0, 1.0 + ratio, len(g)) < 1.0 + ratio * np.cos(g)
        out = np.concatenate([out, g[accept]])
    return out[:n]


def chamfer_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric mean nearest-neighbor distance; brute force."""
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d2.min(axis=1)).mean() + np.sqrt(d2.min(axis=0)).mean())


def _view_basis(view: np.ndarray):
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(view)))] = 1.0
    u = np.cross(view, axis)
    u /= np.linalg.norm(u)
    return u, np.cross(view, u)


def render_observation(
    shape: ShapeModel,
    pose: tuple,
    viewpoint: np.ndarray,
    seed: int = 0,
    noise_sigma: float = DEFAULT_NOISE_SIGMA,
    n_points: int = N_OBS_POINTS,
    instance: int = 0,
) -> Observation:
    """Place, occlude, resample, and (optionally) noise a shape.

    pose is (R, t, s) with s either the scalar bbox diagonal in meters or
    the full 3-vector of bbox dimensions (which must be proportional to the
    shape's canonical extents). viewpoint is the unit object->camera
    direction; culling is orthographic along it.
    """
    r, t, s = pose
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    view = np.asarray(viewpoint, dtype=float)
    if abs(np.linalg.norm(view) - 1.0) > 1e-9:
        raise ValueError("viewpoint must be a unit vector")
    ext = shape.extents
    if np.ndim(s) == 0:
        scale = float(s)
        s_vec = scale * ext
    else:
        s_vec = np.asarray(s, dtype=float)
        if np.any(s_vec <= 0):
            raise ValueError("size components must be positive")
        scale = float(np.linalg.norm(s_vec))
        if np.abs(s_vec - scale * ext).max() > 1e-6 * max(scale, 1.0):
            raise ValueError("size vector must be proportional to canonical extents")
    if scale <= 0:
        raise ValueError("size must be positive")

    pts_cam = scale * (shape.points @ r.T) + t
    normals_cam = shape.normals @ r.T

    front = normals_cam @ view > 0.0
    vis = np.flatnonzero(front)
    if len(vis):
        # Orthographic depth buffer over the object footprint: per bin keep
        # points within DEPTH_TOL of the nearest along the view ray.
        u, v = _view_basis(view)
        q = pts_cam[vis] - t
        depth = q @ view  # larger = closer to the camera
        half = 0.55 * scale
        bu = np.clip(((q @ u + half) / (2 * half) * DEPTH_BINS).astype(int), 0, DEPTH_BINS - 1)
        bv = np.clip(((q @ v + half) / (2 * half) * DEPTH_BINS).astype(int), 0, DEPTH_BINS - 1)
        bins = bu * DEPTH_BINS + bv
        bin_max = np.full(DEPTH_BINS * DEPTH_BINS, -np.inf)
        np.maximum.at(bin_max, bins, depth)
        keep = depth >= bin_max[bins] - DEPTH_TOL_FRAC * scale
        vis = vis[keep]
    if len(vis) < MIN_VISIBLE:
        raise DataError(
            f"degenerate view: only {len(vis)} visible points (need {MIN_VISIBLE})"
        )

    rng = np.random.default_rng(seed)
    if len(vis) >= n_points:
        pick = rng.choice(len(vis), size=n_points, replace=False)
    else:
        pad = rng.integers(0, len(vis), size=n_points - len(vis))
        pick = np.concatenate([np.arange(len(vis)), pad])
    rng.shuffle(pick)
    src = vis[pick]

    out_pts = pts_cam[src]
    if noise_sigma > 0:
        out_pts = out_pts + rng.normal(0.0, noise_sigma, len(src))[:, None] * view
    return Observation(
        out_pts,
        shape.colors[src],
        r,
        t,
        s_vec,
        shape.category,
        instance,
        view,
        len(vis),
        src,
    )


def estimate_translation_size(
    points: np.ndarray,
    inflate: float = DEFAULT_INFLATE,
    view_dir: np.ndarray | None = None,
    view_shift: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic (t, s): centroid and rescaled axis-aligned extents.

    The visible-side centroid is dragged toward the camera; passing the
    unit view_dir with a view_shift fraction of the estimated diagonal
    pushes t back along the ray.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3 or len(points) < MIN_VISIBLE:
        raise ValueError(f"need an Nx3 cloud with N >= {MIN_VISIBLE}")
    t = points.mean(axis=0)
    s = (points.max(axis=0) - points.min(axis=0)) * inflate
    if view_dir is not None and view_shift != 0.0:
        t = t - view_shift * float(np.linalg.norm(s)) * np.asarray(view_dir, dtype=float)
    return t, s


def estimate_ts(
    points: np.ndarray,
    inflate: float = DEFAULT_INFLATE,
    view_shift: float = DEFAULT_VIEW_SHIFT,
) -> tuple[np.ndarray, np.ndarray]:
    """estimate_translation_size with the viewing ray taken from the data.

    The camera sits at the scene origin, so the unit vector from the cloud
    centroid back to the origin is the (only recoverable) view direction.
    This is the one normalization route shared by training and inference.
    """
    points = np.asarray(points, dtype=float)
    view = -points.mean(axis=0)
    norm = np.linalg.norm(view)
    if norm == 0.0:
        raise ValueError("cloud centroid coincides with the camera")
    return estimate_translation_size(points, inflate, view / norm, view_shift)


def normalize_points(points: np.ndarray, t: np.ndarray, s) -> np.ndarray:
    """(points - t) / ||s||_2; accepts scalar s as the norm directly."""
    scale = float(s) if np.ndim(s) == 0 else float(np.linalg.norm(s))
    if scale <= 0:
        raise ValueError("scale must be positive")
    return (np.asarray(points, dtype=float) - np.asarray(t, dtype=float)) / scale


def augment(
    obs: Observation,
    seed: int,
    t_range: float = 0.02,
    s_range: tuple = (0.8, 1.2),
    rot_deg_range: tuple = (-30.0, 30.0),
) -> Observation:
    """Random similarity jitter of the camera-frame cloud, gt kept consistent.

    p' = f * (dR @ p) + dt with dt ~ U(-t_range, t_range)^3,
    f ~ U(*s_range), and dR composed of per-axis rotations with degrees
    ~ U(*rot_deg_range); so R' = dR R, t' = f dR t + dt, s' = f s.
    """
    rng = np.random.default_rng(seed)
    dt = rng.uniform(-t_range, t_range, 3)
    f = float(rng.uniform(*s_range))
    deg = rng.uniform(*rot_deg_range, 3)
    a, b, c = np.deg2rad(deg)
    dr = so3.rot_z(c) @ so3.rot_y(b) @ so3.rot_x(a)
    return replace(
        obs,
        points_cam=f * (obs.points_cam @ dr.T) + dt,
        r=dr @ obs.r,
        t=f * (dr @ obs.t) + dt,
        s=f * obs.s,
        viewpoint=dr @ obs.viewpoint,
    )


def make_observation(
    shape: ShapeModel,
    rng: np.random.Generator,
    noise_sigma: float = DEFAULT_NOISE_SIGMA,
    instance: int = 0,
    n_points: int = N_OBS_POINTS,
) -> Observation:
    """Random pose + viewpoint with the camera at the origin.

    Retries fresh poses on degenerate views (possible for extreme bottles
    seen pole-on); the rng advances, so retries stay deterministic.
    """
    for _ in range(16):
        r = so3.random_rotation(rng)
        scale = float(rng.uniform(0.15, 0.30))
        view = rng.standard_normal(3)
        view /= np.linalg.norm(view)
        dist = float(rng.uniform(0.6, 1.0))
        t = -dist * view
        seed = int(rng.integers(0, 2**63 - 1))
        try:
            return render_observation(
                shape, (r, t, scale), view, seed, noise_sigma, n_points, instance
            )
        except DataError:
            continue
    raise DataError("no usable viewpoint found after 16 attempts")


def make_dataset(
    n_per_category: int,
    seed: int,
    categories: tuple = CATEGORIES,
    noise_sigma: float = DEFAULT_NOISE_SIGMA,
    k_points: int = 4096,
) -> list[Observation]:
    """One observation per instance, deterministic in (arguments, seed)."""
    root = np.random.SeedSequence(seed)
    out = []
    instance = 0
    for ci, cat in enumerate(categories):
        streams = root.spawn(len(categories))[ci].spawn(n_per_category)
        for j in range(n_per_category):
            rng = np.random.default_rng(streams[j])
            params = sample_shape_params(cat, rng)
            shape = make_shape(cat, params, k_points, seed=int(rng.integers(0, 2**31)))
            out.append(make_observation(shape, rng, noise_sigma, instance))
            instance += 1
    return out


def save_dataset(path, observations: list[Observation]) -> None:
    """JSON-lines, one observation per line."""
    with open(path, "w") as f:
        for o in observations:
            rec = {
                "category": o.category,
                "instance": o.instance,
                "points": o.points_cam.tolist(),
                "colors": o.colors.tolist(),
                "r": so3.rotation_to_flat(o.r),
                "t": o.t.tolist(),
                "s": o.s.tolist(),
                "viewpoint": o.viewpoint.tolist(),
                "n_visible": o.n_visible,
                "source_index": o.source_index.tolist(),
            }
            f.write(json.dumps(rec) + "\n")


def load_dataset(path) -> list[Observation]:
    out = []
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            out.append(
                Observation(
                    np.array(rec["points"]),
                    np.array(rec["colors"]),
                    so3.rotation_from_flat(rec["r"]),
                    np.array(rec["t"]),
                    np.array(rec["s"]),
                    rec["category"],
                    rec["instance"],
                    np.array(rec["viewpoint"]),
                    rec["n_visible"],
                    np.array(rec["source_index"], dtype=int),
                )
            )
    return out
