"""Geometric and topological evaluation metrics for binary tubular masks.

Covers centerline Dice, normalized surface Dice, 95th-percentile Hausdorff
distance, tree-length/branch detected rates, component-count error, and
plain Dice as a bonus. Surfaces are foreground voxels with at least one
six-connected in-bounds background neighbor; surface distances use the
exact Euclidean distance transform scaled by voxel spacing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .cubical_ph import label_components
from .errors import ToposculptError
from .soft_skeleton import SkeletonParams, skeleton_values
from .volume import ROLE_BINARY, Connectivity, Volume, VoxelCoord


@dataclass(frozen=True)
class CenterlineTruth:
    """Branch-labeled ground-truth centerline voxels.

    ``branches[i]`` is the ordered voxel list of branch id ``i``; ids are
    contiguous from 0 by construction.
    """

    branches: tuple[tuple[VoxelCoord, ...], ...]

    def __post_init__(self):
        if len(self.branches) < 1:
            raise ToposculptError("centerline needs at least one branch")
        if any(len(b) == 0 for b in self.branches):
            raise ToposculptError("centerline branches must be non-empty")

    @property
    def branch_count(self) -> int:
        return len(self.branches)

    @property
    def voxels(self) -> list[tuple[VoxelCoord, int]]:
        return [(v, i) for i, branch in enumerate(self.branches) for v in branch]

    @property
    def total_voxels(self) -> int:
        return sum(len(b) for b in self.branches)


@dataclass(frozen=True)
class MetricReport:
    """One case's metric values; percentages in [0, 100] where computed."""

    cldice_pct: float
    nsdice_pct: float
    hd95_mm: float
    bd_pct: float
    td_pct: float
    betti0_error: int
    dice_pct: float
    flags: tuple[str, ...] = ()


def _as_bool_mask(v: Volume) -> np.ndarray:
    v.require_role(ROLE_BINARY)
    return v.data.astype(bool)


def _check_grids(pred: Volume, gt: Volume) -> None:
    if not pred.same_grid(gt):
        raise ToposculptError(
            f"pred/gt grids differ: {pred.dims}/{pred.spacing} vs {gt.dims}/{gt.spacing}"
        )


def betti0_error(pred: Volume, gt: Volume, conn: Connectivity = Connectivity.C26) -> int:
    """Absolute difference in connected-component counts."""
    _check_grids(pred, gt)
    _, n_pred = label_components(_as_bool_mask(pred), conn)
    _, n_gt = label_components(_as_bool_mask(gt), conn)
    return abs(int(n_pred) - int(n_gt))


def surface_voxels(mask: np.ndarray) -> np.ndarray:
    """Foreground voxels with a six-connected in-bounds background neighbor."""
    fg = mask.astype(bool)
    bg = ~fg
    has_bg = np.zeros_like(fg)
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(1, None)
        hi[axis] = slice(None, -1)
        has_bg[tuple(lo)] |= bg[tuple(hi)]
        has_bg[tuple(hi)] |= bg[tuple(lo)]
    return fg & has_bg


def centerline_mask(cl: CenterlineTruth, dims) -> np.ndarray:
    """Rasterize a centerline into a boolean voxel mask."""
    mask = np.zeros(dims, dtype=bool)
    for branch in cl.branches:
        for v in branch:
            mask[v] = True
    return mask


def cl_dice(
    pred: Volume,
    gt: Volume,
    gt_centerline: Optional[CenterlineTruth] = None,
    skel_params: SkeletonParams = SkeletonParams(),
) -> tuple[float, tuple[str, ...]]:
    """Centerline Dice in percent, plus any degeneracy flags.

    The prediction skeleton is always the soft-skeleton support; the
    ground-truth skeleton uses the exact centerline when available.
    """
    _check_grids(pred, gt)
    pred_mask = _as_bool_mask(pred)
    gt_mask = _as_bool_mask(gt)
    skel_pred = (
        skeleton_values(pred_mask.astype(np.float64), skel_params.iterations, skel_params.pooling)
        > 0.0
    )
    if gt_centerline is not None:
        skel_gt = centerline_mask(gt_centerline, gt.dims)
    else:
        skel_gt = (
            skeleton_values(gt_mask.astype(np.float64), skel_params.iterations, skel_params.pooling)
            > 0.0
        )
    n_skel_pred = int(skel_pred.sum())
    n_skel_gt = int(skel_gt.sum())
    if n_skel_pred == 0 or n_skel_gt == 0:
        return 0.0, ("empty-skeleton",)
    tprec = float((skel_pred & gt_mask).sum()) / n_skel_pred
    tsens = float((skel_gt & pred_mask).sum()) / n_skel_gt
    if tprec + tsens == 0.0:
        return 0.0, ()
    return 200.0 * tprec * tsens / (tprec + tsens), ()


def _surface_distances(pred_surf: np.ndarray, gt_surf: np.ndarray, spacing):
    """Distances from each surface to the other, via exact EDT."""
    dist_to_gt = ndimage.distance_transform_edt(~gt_surf, sampling=spacing)
    dist_to_pred = ndimage.distance_transform_edt(~pred_surf, sampling=spacing)
    return dist_to_gt[pred_surf], dist_to_pred[gt_surf]


def nsdice(
    pred: Volume, gt: Volume, tolerance_mm: float = 1.0
) -> tuple[float, tuple[str, ...]]:
    """Normalized surface Dice in percent at a distance tolerance."""
    _check_grids(pred, gt)
    if tolerance_mm < 0:
        raise ToposculptError(f"tolerance must be >= 0, got {tolerance_mm}")
    pred_mask = _as_bool_mask(pred)
    gt_mask = _as_bool_mask(gt)
    pred_surf = surface_voxels(pred_mask)
    gt_surf = surface_voxels(gt_mask)
    n_pred = int(pred_surf.sum())
    n_gt = int(gt_surf.sum())
    if n_pred == 0 and n_gt == 0:
        both_empty_equal = not pred_mask.any() and not gt_mask.any()
        return (100.0 if both_empty_equal else 0.0), ("empty-surfaces",)
    if n_pred == 0 or n_gt == 0:
        return 0.0, ("empty-surface-one-side",)
    d_pred, d_gt = _surface_distances(pred_surf, gt_surf, pred.spacing)
    overlap = int((d_pred <= tolerance_mm).sum()) + int((d_gt <= tolerance_mm).sum())
    return 100.0 * overlap / (n_pred + n_gt), ()


def hd95(pred: Volume, gt: Volume) -> float:
    """95th percentile (linear interpolation) of pooled surface distances, mm."""
    _check_grids(pred, gt)
    pred_mask = _as_bool_mask(pred)
    gt_mask = _as_bool_mask(gt)
    if not pred_mask.any():
        raise ToposculptError("hd95: pred mask is empty")
    if not gt_mask.any():
        raise ToposculptError("hd95: gt mask is empty")
    pred_surf = surface_voxels(pred_mask)
    gt_surf = surface_voxels(gt_mask)
    if not pred_surf.any() and not gt_surf.any():
        return 0.0
    if not pred_surf.any() or not gt_surf.any():
        return float("inf")
    d_pred, d_gt = _surface_distances(pred_surf, gt_surf, pred.spacing)
    pooled = np.concatenate([d_pred, d_gt])
    return float(np.percentile(pooled, 95.0))


def tree_branch_detected(pred: Volume, cl: CenterlineTruth) -> tuple[float, float]:
    """Tree-length and branch detected rates, percent.

    A branch counts as detected when strictly more than 80% of its
    centerline voxels lie inside the prediction.
    """
    pred_mask = _as_bool_mask(pred)
    dims = pred_mask.shape
    total = cl.total_voxels
    if total == 0:
        raise ToposculptError("empty centerline")
    covered = 0
    detected_branches = 0
    for branch in cl.branches:
        inside = 0
        for v in branch:
            if not (0 <= v[0] < dims[0] and 0 <= v[1] < dims[1] and 0 <= v[2] < dims[2]):
                raise ToposculptError(f"centerline voxel {tuple(v)} outside grid {dims}")
            if pred_mask[v]:
                inside += 1
        covered += inside
        # strict > 80%, exact in integers: inside/len > 4/5
        if 5 * inside > 4 * len(branch):
            detected_branches += 1
    td = 100.0 * covered / total
    bd = 100.0 * detected_branches / cl.branch_count
    return td, bd


def dice(pred: Volume, gt: Volume) -> float:
    """Plain Dice overlap in percent (bonus metric, not a refinement target)."""
    _check_grids(pred, gt)
    pred_mask = _as_bool_mask(pred)
    gt_mask = _as_bool_mask(gt)
    total = int(pred_mask.sum()) + int(gt_mask.sum())
    if total == 0:
        return 100.0
    return 200.0 * int((pred_mask & gt_mask).sum()) / total


def evaluate_case(
    pred: Volume,
    gt: Volume,
    centerline: Optional[CenterlineTruth] = None,
    nsd_tolerance_mm: float = 1.0,
    skel_params: SkeletonParams = SkeletonParams(),
    conn: Connectivity = Connectivity.C26,
) -> MetricReport:
    """All metrics for one case; TD/BD are NaN-flagged without a centerline."""
    flags: list[str] = []
    cld, f = cl_dice(pred, gt, centerline, skel_params)
    flags.extend(f)
    nsd, f = nsdice(pred, gt, nsd_tolerance_mm)
    flags.extend(f)
    hd = hd95(pred, gt)
    if centerline is not None:
        td, bd = tree_branch_detected(pred, centerline)
    else:
        td, bd = float("nan"), float("nan")
        flags.append("no-centerline")
    return MetricReport(
        cldice_pct=cld,
        nsdice_pct=nsd,
        hd95_mm=hd,
        bd_pct=bd,
        td_pct=td,
        betti0_error=betti0_error(pred, gt, conn),
        dice_pct=dice(pred, gt),
        flags=tuple(flags),
    )
