"""Sphere partitions: HEALPix (RING), equirectangular, Fibonacci lattice.

Each grid is a partition of S^2 into M cells with a unit anchor vector at
every cell center. Directions are mapped to cells by ang2pix; anchors map to
their own cell (self-consistency is what the tests pin down, since the three
constructions share no code).

HEALPix uses RING ordering: iso-latitude rings of 4i cells in the polar caps
(counted from the pole), 4*N_side cells per ring in the equatorial belt
|z| <= 2/3. Cells are equal-area by construction. The equirectangular grid is
equal-angle (heavily non-uniform in area near the poles); the Fibonacci
lattice is near-uniform with nearest-anchor lookup.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HEALPIX = "healpix"
EQUIRECT = "equirect"
FIBONACCI = "fibonacci"

GOLDEN_RATIO = (1.0 + np.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class SphericalGrid:
    kind: str
    m_cells: int
    anchors: np.ndarray  # (M, 3) unit vectors, row i = center of cell i
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.anchors.setflags(write=False)


def build_grid(kind: str, resolution) -> SphericalGrid:
    """Construct a grid.

    resolution: N_side for healpix (power of two), point count for fibonacci,
    and either n (n x n) or (n_lat, n_lon) for equirect.
    """
    if kind == HEALPIX:
        nside = int(resolution)
        if nside < 1 or nside & (nside - 1):
            raise ValueError("healpix N_side must be a power of two >= 1")
        anchors = _healpix_anchors(nside)
        return SphericalGrid(HEALPIX, 12 * nside * nside, anchors, {"nside": nside})
    if kind == EQUIRECT:
        if isinstance(resolution, (tuple, list)):
            n_lat, n_lon = int(resolution[0]), int(resolution[1])
        else:
            n_lat = n_lon = int(resolution)
        if n_lat < 1 or n_lon < 1:
            raise ValueError("equirect bin counts must be >= 1")
        anchors = _equirect_anchors(n_lat, n_lon)
        return SphericalGrid(
            EQUIRECT, n_lat * n_lon, anchors, {"n_lat": n_lat, "n_lon": n_lon}
        )
    if kind == FIBONACCI:
        n = int(resolution)
        if n < 1:
            raise ValueError("fibonacci point count must be >= 1")
        return SphericalGrid(FIBONACCI, n, _fibonacci_anchors(n), {"n": n})
    raise ValueError(f"unknown grid kind: {kind!r}")


def ang2pix(grid: SphericalGrid, v: np.ndarray) -> np.ndarray | int:
    """Cell index for direction(s) v; (3,) -> int, (N,3) -> (N,) int64.

    Inputs are normalized internally; zero vectors are rejected. Boundary
    behavior is deterministic: half-open angular intervals for healpix and
    equirect, first-lowest-index nearest anchor for fibonacci.
    """
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    pts = v.reshape(1, 3) if single else v
    norms = np.linalg.norm(pts, axis=1)
    if np.any(norms == 0.0) or not np.all(np.isfinite(norms)):
        raise ValueError("cannot assign a cell to a zero or non-finite vector")
    pts = pts / norms[:, None]

    if grid.kind == HEALPIX:
        idx = _healpix_ang2pix(grid.params["nside"], pts)
    elif grid.kind == EQUIRECT:
        idx = _equirect_ang2pix(grid.params["n_lat"], grid.params["n_lon"], pts)
    elif grid.kind == FIBONACCI:
        # Brute force is fine at M <= ~1024; argmax takes the lowest index
        # on exact dot-product ties. Chunked so the (chunk, M) score block
        # stays under ~100 MB for large batches.
        idx = np.empty(len(pts), dtype=np.int64)
        step = max(1, (12 * 2**20) // grid.m_cells)
        for lo in range(0, len(pts), step):
            block = pts[lo : lo + step] @ grid.anchors.T
            idx[lo : lo + step] = np.argmax(block, axis=1)
    else:
        raise ValueError(f"unknown grid kind: {grid.kind!r}")
    return int(idx[0]) if single else idx


@dataclass(frozen=True)
class SolidAngleStats:
    per_cell: np.ndarray  # (M,) estimated solid angles, sums to exactly 4*pi
    max_min_ratio: float
    n_samples: int


def solid_angle_stats(
    grid: SphericalGrid, n_samples: int, seed: int = 0
) -> SolidAngleStats:
    """Monte-Carlo estimate of per-cell solid angles.

    Stratified jittered sampling on an equal-area (z, phi) lattice: K^2
    strata with one uniform draw each, K = round(sqrt(n_samples)). Unbiased
    like iid sampling, but only boundary strata contribute variance, which
    tightens the max/min ratio estimate by an order of magnitude at the same
    sample count.
    """
    if n_samples < 10**5:
        raise ValueError("need at least 1e5 samples for stable area estimates")
    k = int(round(np.sqrt(n_samples)))
    total = k * k
    rng = np.random.default_rng(seed)
    counts = np.zeros(grid.m_cells, dtype=np.int64)
    chunk = max(1, 10**6 // k) * k
    for start in range(0, total, chunk):
        s = np.arange(start, min(start + chunk, total))
        az = s // k
        aphi = s % k
        z = -1.0 + 2.0 * (az + rng.random(len(s))) / k
        phi = 2.0 * np.pi * (aphi + rng.random(len(s))) / k
        r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        pts = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
        counts += np.bincount(ang2pix(grid, pts), minlength=grid.m_cells)
    per_cell = counts * (4.0 * np.pi / total)
    cmin = counts.min()
    ratio = float(counts.max() / cmin) if cmin > 0 else float("inf")
    return SolidAngleStats(per_cell, ratio, total)


def dump_csv(grid: SphericalGrid, path) -> None:
    """Write anchor rows as 'index,x,y,z' for debugging and plotting."""
    with open(path, "w") as f:
        f.write("index,x,y,z\n")
        for i, (x, y, z) in enumerate(grid.anchors):
            f.write(f"{i},{x:.17g},{y:.17g},{z:.17g}\n")


# --- healpix (RING ordering) ---

def _healpix_anchors(nside: int) -> np.ndarray:
    zs = []
    phis = []
    # North cap: rings i = 1 .. nside-1, 4i cells, z = 1 - i^2/(3 nside^2).
    for i in range(1, nside):
        j = np.arange(4 * i)
        zs.append(np.full(4 * i, 1.0 - i * i / (3.0 * nside * nside)))
        phis.append((j + 0.5) * (np.pi / (2.0 * i)))
    # Equatorial belt: rings i = nside .. 3 nside, 4 nside cells,
    # z = (2 nside - i) * 2/(3 nside); alternate rings shift by half a cell.
    for i in range(nside, 3 * nside + 1):
        j = np.arange(4 * nside)
        shift = 0.5 if (i + nside) % 2 == 0 else 0.0
        zs.append(np.full(4 * nside, (2.0 * nside - i) * 2.0 / (3.0 * nside)))
        phis.append((j + shift) * (np.pi / (2.0 * nside)))
    # South cap mirrors the north cap.
    for i in range(nside - 1, 0, -1):
        j = np.arange(4 * i)
        zs.append(np.full(4 * i, i * i / (3.0 * nside * nside) - 1.0))
        phis.append((j + 0.5) * (np.pi / (2.0 * i)))
    z = np.concatenate(zs)
    phi = np.concatenate(phis)
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _healpix_ang2pix(nside: int, pts: np.ndarray) -> np.ndarray:
    z = pts[:, 2]
    za = np.abs(z)
    phi = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2.0 * np.pi)
    tt = phi * (2.0 / np.pi)  # in [0, 4)
    npix = 12 * nside * nside
    ncap = 2 * nside * (nside - 1)
    nl4 = 4 * nside
    pix = np.empty(len(pts), dtype=np.int64)

    eq = za <= 2.0 / 3.0
    if np.any(eq):
        temp1 = nside * (0.5 + tt[eq])
        temp2 = nside * (z[eq] * 0.75)
        jp = np.floor(temp1 - temp2).astype(np.int64)  # ascending edge line
        jm = np.floor(temp1 + temp2).astype(np.int64)  # descending edge line
        ir = nside + 1 + jp - jm  # ring number from z = 2/3, in {1 .. 2n+1}
        kshift = 1 - (ir & 1)
        num = jp + jm - nside + kshift + 1
        # C-style truncating division; num can brush -1 on the seam.
        ip = np.where(num >= 0, num // 2, -((-num) // 2))
        ip = np.mod(ip, nl4)
        pix[eq] = ncap + (ir - 1) * nl4 + ip

    cap = ~eq
    if np.any(cap):
        ttc = tt[cap]
        tp = ttc - np.floor(ttc)
        tmp = nside * np.sqrt(3.0 * (1.0 - za[cap]))
        jp = np.floor(tp * tmp).astype(np.int64)
        jm = np.floor((1.0 - tp) * tmp).astype(np.int64)
        ir = jp + jm + 1  # ring number from the closest pole
        ip = np.mod(np.floor(ttc * ir).astype(np.int64), 4 * ir)
        north = 2 * ir * (ir - 1) + ip
        south = npix - 2 * ir * (ir + 1) + ip
        pix[cap] = np.where(z[cap] > 0, north, south)
    return pix


# --- equirectangular ---

def _equirect_anchors(n_lat: int, n_lon: int) -> np.ndarray:
    theta = (np.arange(n_lat) + 0.5) * (np.pi / n_lat)
    phi = (np.arange(n_lon) + 0.5) * (2.0 * np.pi / n_lon)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    st = np.sin(th)
    return np.stack(
        [st * np.cos(ph), st * np.sin(ph), np.cos(th)], axis=-1
    ).reshape(-1, 3)


def _equirect_ang2pix(n_lat: int, n_lon: int, pts: np.ndarray) -> np.ndarray:
    theta = np.arccos(np.clip(pts[:, 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2.0 * np.pi)
    i = np.minimum((theta * (n_lat / np.pi)).astype(np.int64), n_lat - 1)
    j = np.mod((phi * (n_lon / (2.0 * np.pi))).astype(np.int64), n_lon)
    return i * n_lon + j


# --- fibonacci lattice ---

def _fibonacci_anchors(n: int) -> np.ndarray:
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    phi = np.mod(2.0 * np.pi * i / GOLDEN_RATIO, 2.0 * np.pi)
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
