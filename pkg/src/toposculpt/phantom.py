"""Synthetic tubular-tree phantoms with exact centerlines and corruptions.

A phantom is a bifurcating tree of straight tube segments (union of swept
spheres, radius decaying per generation) plus an "initial prediction"
probability map derived from it by carving spherical breaks, adding
disjoint ellipsoidal blobs, soft-mapping to probabilities, box-blurring
once, adding uniform noise, and clamping to [0.01, 0.99].

All randomness flows through a Philox counter-based generator keyed by the
configured seed, so cases are bit-identical across platforms. Breaks are
validated to actually disconnect the tube (component count must grow) and
blobs keep a gap of at least three voxels from the tree and each other so
they survive the blur as separate components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .cubical_ph import label_components
from .errors import PhantomPlacementError, ToposculptError
from .metrics import CenterlineTruth
from .volume import ROLE_BINARY, ROLE_PROBABILITY, Connectivity, Volume, VoxelCoord

_BLOB_GAP_VOXELS = 3.0  # keeps blobs disjoint from the tree even after blur


@dataclass(frozen=True)
class PhantomConfig:
    """Geometry, corruption, and probability-mapping parameters."""

    dims: tuple[int, int, int] = (96, 96, 96)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    seed: int = 0
    generations: int = 3
    root_radius: float = 3.3
    radius_decay: float = 0.62
    branch_length: tuple[float, float] = (26.0, 32.0)
    length_decay: float = 1.0
    branch_angle: tuple[float, float] = (22.0, 40.0)
    breaks: int = 0
    break_radius: Optional[tuple[float, float]] = None  # None: local radius + U(0.7, 1.2)
    blobs: int = 0
    blob_radius: tuple[float, float] = (2.0, 3.0)
    noise_amplitude: float = 0.0
    fg_prob: float = 0.9
    bg_prob: float = 0.1
    max_retries: int = 60

    def __post_init__(self):
        if self.generations < 1:
            raise ToposculptError("generations must be >= 1")
        if self.root_radius < 1.0:
            raise ToposculptError("root radius must be >= 1 voxel")
        if not 0.0 < self.radius_decay < 1.0 or not 0.0 < self.length_decay <= 1.0:
            raise ToposculptError("decay factors must lie in (0, 1]")
        for name, rng_ in (
            ("branch_length", self.branch_length),
            ("branch_angle", self.branch_angle),
            ("blob_radius", self.blob_radius),
        ):
            if rng_[0] <= 0 or rng_[1] < rng_[0]:
                raise ToposculptError(f"{name} range must be positive and ordered, got {rng_}")
        if self.break_radius is not None and (
            self.break_radius[0] <= 0 or self.break_radius[1] < self.break_radius[0]
        ):
            raise ToposculptError(f"break_radius range invalid: {self.break_radius}")
        if self.breaks < 0 or self.blobs < 0:
            raise ToposculptError("breaks and blobs must be >= 0")
        if not 0.0 <= self.noise_amplitude < 0.4:
            raise ToposculptError("noise amplitude out of range")
        if not 0.0 < self.bg_prob < 0.5 < self.fg_prob < 1.0:
            raise ToposculptError("need bg_prob < 0.5 < fg_prob")


@dataclass
class PhantomCase:
    """Ground truth, exact centerline, corrupted initial map, and the record."""

    gt_mask: Volume
    centerline: CenterlineTruth
    init_prob: Volume
    corruption_record: list[dict]


def _rng_for(cfg: PhantomConfig, stream: int) -> np.random.Generator:
    # Philox is counter-based and stream-stable across platforms.
    return np.random.Generator(np.random.Philox(key=(cfg.seed, stream)))


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _perpendicular_basis(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = _unit(np.cross(d, helper))
    w = np.cross(d, u)
    return u, w


def _stamp_sphere(mask: np.ndarray, center: np.ndarray, radius: float) -> None:
    dims = mask.shape
    lo = [max(0, int(math.floor(c - radius))) for c in center]
    hi = [min(dims[a] - 1, int(math.ceil(center[a] + radius))) for a in range(3)]
    if any(lo[a] > hi[a] for a in range(3)):
        return
    xs = np.arange(lo[0], hi[0] + 1)
    ys = np.arange(lo[1], hi[1] + 1)
    zs = np.arange(lo[2], hi[2] + 1)
    dx = (xs - center[0])[:, None, None]
    dy = (ys - center[1])[None, :, None]
    dz = (zs - center[2])[None, None, :]
    inside = dx * dx + dy * dy + dz * dz <= radius * radius
    mask[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1] |= inside


def _carve_sphere(mask: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    out = mask.copy()
    dims = mask.shape
    lo = [max(0, int(math.floor(c - radius))) for c in center]
    hi = [min(dims[a] - 1, int(math.ceil(center[a] + radius))) for a in range(3)]
    xs = np.arange(lo[0], hi[0] + 1)
    ys = np.arange(lo[1], hi[1] + 1)
    zs = np.arange(lo[2], hi[2] + 1)
    dx = (xs - center[0])[:, None, None]
    dy = (ys - center[1])[None, :, None]
    dz = (zs - center[2])[None, None, :]
    inside = dx * dx + dy * dy + dz * dz <= radius * radius
    region = out[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1]
    region[inside] = False
    return out


def generate_tree(cfg: PhantomConfig) -> tuple[Volume, CenterlineTruth]:
    """Rasterize the bifurcating tube tree and its branch-labeled centerline.

    Deterministic in the seed. Raises PhantomPlacementError when the tree
    cannot be placed within bounds after the retry budget.
    """
    rng = _rng_for(cfg, stream=0)
    dims = np.array(cfg.dims, dtype=float)
    mask = np.zeros(cfg.dims, dtype=bool)
    margin = cfg.root_radius + 1.5

    root = np.array(
        [
            cfg.dims[0] / 2.0 + rng.uniform(-3.0, 3.0),
            cfg.dims[1] / 2.0 + rng.uniform(-3.0, 3.0),
            margin + 1.0,
        ]
    )
    tilt = rng.uniform(-0.15, 0.15, size=2)
    direction = _unit(np.array([tilt[0], tilt[1], 1.0]))

    # FIFO over (start, direction, generation); branch ids follow insertion.
    pending = [(root, direction, 0)]
    branch_voxels: list[list[VoxelCoord]] = []
    seen: set[VoxelCoord] = set()

    while pending:
        start, d, gen = pending.pop(0)
        radius = cfg.root_radius * cfg.radius_decay**gen
        placed = False
        for _ in range(cfg.max_retries):
            length = rng.uniform(*cfg.branch_length) * cfg.length_decay**gen
            end = start + length * d
            lo_ok = np.all(np.minimum(start, end) - radius >= 1.0)
            hi_ok = np.all(np.maximum(start, end) + radius <= dims - 2.0)
            if lo_ok and hi_ok:
                placed = True
                break
            # pull the direction back toward the volume center and retry
            center_pull = _unit(dims / 2.0 - start)
            d = _unit(0.6 * d + 0.4 * center_pull)
        if not placed:
            raise PhantomPlacementError(
                f"cannot place generation-{gen} branch inside dims {cfg.dims}; use larger dims"
            )

        n_samples = max(2, int(math.ceil(length / 0.5)) + 1)
        ts = np.linspace(0.0, 1.0, n_samples)
        voxels: list[VoxelCoord] = []
        for t in ts:
            point = start + t * length * d
            _stamp_sphere(mask, point, radius)
            v = VoxelCoord(*(int(round(c)) for c in point))
            if v not in seen:
                seen.add(v)
                voxels.append(v)
        if not voxels:
            raise PhantomPlacementError("degenerate branch produced no centerline voxels")
        branch_voxels.append(voxels)

        if gen + 1 < cfg.generations:
            u, w = _perpendicular_basis(d)
            azimuth = rng.uniform(0.0, 2.0 * math.pi)
            e = math.cos(azimuth) * u + math.sin(azimuth) * w
            for sign in (+1.0, -1.0):
                angle = math.radians(rng.uniform(*cfg.branch_angle))
                child = _unit(math.cos(angle) * d + sign * math.sin(angle) * e)
                pending.append((start + length * d, child, gen + 1))

    gt = Volume(mask.astype(np.uint8), cfg.spacing, ROLE_BINARY)
    _, n_comp = label_components(mask, Connectivity.C26)
    if n_comp != 1:
        raise PhantomPlacementError(f"generated tree has {n_comp} components, expected 1")
    for voxels in branch_voxels:
        for v in voxels:
            if not mask[v]:
                raise PhantomPlacementError(f"centerline voxel {tuple(v)} escaped the tube")
    return gt, CenterlineTruth(tuple(tuple(b) for b in branch_voxels))


def _junction_points(cl: CenterlineTruth) -> np.ndarray:
    """Bifurcation sites: branch ends where another branch begins."""
    starts = [np.array(b[0], dtype=float) for b in cl.branches]
    pts = []
    for i, branch in enumerate(cl.branches):
        end = np.array(branch[-1], dtype=float)
        for j, s in enumerate(starts):
            if j != i and np.linalg.norm(end - s) <= 2.5:
                pts.append(end)
                break
    return np.array(pts, dtype=float) if pts else np.zeros((0, 3))


def corrupt(gt_mask: Volume, centerline: CenterlineTruth, cfg: PhantomConfig):
    """Derive the corrupted initial probability map from the ground truth.

    Breaks carve spheres centered on interior centerline voxels (kept away
    from bifurcations) and must each raise the component count of the
    broken mask; blobs are ellipsoids at least three voxels clear of the
    tree and of each other. The whole corruption is re-drawn when the
    final binarized map fails its component-count floor.

    Returns:
        (init_prob volume, corruption record list).
    """
    rng = _rng_for(cfg, stream=1)
    gt = gt_mask.data.astype(bool)
    junctions = _junction_points(centerline)
    all_centerline = [v for branch in centerline.branches for v in branch]
    local_radius = ndimage.distance_transform_edt(gt)

    last_failure = "no attempts made"
    for _ in range(cfg.max_retries):
        record: list[dict] = []
        broken = gt.copy()
        n_comp_prev = 1
        ok = True

        for _ in range(cfg.breaks):
            placed = False
            for _ in range(cfg.max_retries):
                v = all_centerline[int(rng.integers(len(all_centerline)))]
                if cfg.break_radius is not None:
                    r_b = float(rng.uniform(*cfg.break_radius))
                else:
                    # minimal severing margin: the carve's rim gap stays a
                    # few voxels so the blur ring spans it
                    r_b = float(local_radius[v]) + float(rng.uniform(0.5, 0.9))
                center = np.array(v, dtype=float)
                if len(junctions) and np.min(np.linalg.norm(junctions - center, axis=1)) <= 2.0 * r_b:
                    continue
                carved = _carve_sphere(broken, center, r_b)
                _, n_comp = label_components(carved, Connectivity.C26)
                if n_comp > n_comp_prev:
                    broken = carved
                    n_comp_prev = n_comp
                    record.append(
                        {"kind": "break", "center": [int(c) for c in v], "radius": r_b}
                    )
                    placed = True
                    break
            if not placed:
                ok = False
                last_failure = "could not place a separating break"
                break
        if not ok:
            continue

        blob_mask = np.zeros_like(gt)
        for _ in range(cfg.blobs):
            placed = False
            for _ in range(cfg.max_retries):
                occupied = gt | blob_mask
                clearance = ndimage.distance_transform_edt(~occupied)
                radii = rng.uniform(*cfg.blob_radius) * rng.uniform(0.8, 1.25, size=3)
                # spurious components hug the anatomy: offset from a random
                # centerline voxel, keeping the disjointness gap
                anchor = all_centerline[int(rng.integers(len(all_centerline)))]
                direction = rng.normal(size=3)
                norm = float(np.linalg.norm(direction))
                if norm < 1e-9:
                    continue
                direction /= norm
                offset = float(local_radius[anchor]) + _BLOB_GAP_VOXELS + float(radii.max())
                center = np.array(anchor, dtype=float) + direction * (offset + float(rng.uniform(0.0, 0.8)))
                if np.any(center - radii < 2.0) or np.any(center + radii > np.array(cfg.dims) - 3.0):
                    continue
                candidate = np.zeros_like(gt)
                _stamp_ellipsoid(candidate, center, radii)
                if not candidate.any():
                    continue
                gap = float(clearance[candidate].min())
                if not _BLOB_GAP_VOXELS <= gap <= _BLOB_GAP_VOXELS + 1.5:
                    continue  # keep the causeway within the blur ring's reach
                blob_mask |= candidate
                record.append(
                    {
                        "kind": "blob",
                        "center": [float(c) for c in center],
                        "radii": [float(r) for r in radii],
                    }
                )
                placed = True
                break
            if not placed:
                raise PhantomPlacementError(
                    "cannot place a blob disjoint from the tree; use larger dims or fewer blobs"
                )

        fg = broken | blob_mask
        prob = np.where(fg, cfg.fg_prob, cfg.bg_prob).astype(np.float64)
        prob = ndimage.uniform_filter(prob, size=3, mode="nearest")
        prob += rng.uniform(-cfg.noise_amplitude, cfg.noise_amplitude, size=cfg.dims)
        np.clip(prob, 0.01, 0.99, out=prob)

        _, n_comp_final = label_components(prob > 0.5, Connectivity.C26)
        floor = 1 + cfg.blobs + (1 if cfg.breaks > 0 else 0)
        if n_comp_final >= floor:
            init = Volume(prob, gt_mask.spacing, ROLE_PROBABILITY)
            return init, record
        last_failure = f"binarized map has {n_comp_final} components, needed >= {floor}"

    raise PhantomPlacementError(f"corruption failed after retries: {last_failure}")


def _stamp_ellipsoid(mask: np.ndarray, center: np.ndarray, radii: np.ndarray) -> None:
    dims = mask.shape
    lo = [max(0, int(math.floor(center[a] - radii[a]))) for a in range(3)]
    hi = [min(dims[a] - 1, int(math.ceil(center[a] + radii[a]))) for a in range(3)]
    if any(lo[a] > hi[a] for a in range(3)):
        return
    xs = (np.arange(lo[0], hi[0] + 1) - center[0])[:, None, None] / radii[0]
    ys = (np.arange(lo[1], hi[1] + 1) - center[1])[None, :, None] / radii[1]
    zs = (np.arange(lo[2], hi[2] + 1) - center[2])[None, None, :] / radii[2]
    inside = xs * xs + ys * ys + zs * zs <= 1.0
    mask[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1] |= inside


def generate_case(cfg: PhantomConfig) -> PhantomCase:
    """Generate ground truth and corrupted initial prediction in one shot."""
    gt, cl = generate_tree(cfg)
    init, record = corrupt(gt, cl, cfg)
    return PhantomCase(gt_mask=gt, centerline=cl, init_prob=init, corruption_record=record)
