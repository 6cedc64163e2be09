import itertools

import numpy as np
import pytest

from toposculpt import (
    CenterlineTruth,
    Connectivity,
    SkeletonParams,
    ToposculptError,
    Volume,
    VoxelCoord,
    betti0_error,
    cl_dice,
    dice,
    evaluate_case,
    hd95,
    nsdice,
    tree_branch_detected,
)
from toposculpt.metrics import surface_voxels
from toposculpt.soft_skeleton import dilate_values

SKEL = SkeletonParams(iterations=2)


def binary(arr, spacing=(1.0, 1.0, 1.0)):
    return Volume(np.asarray(arr, dtype=np.uint8), spacing, "binary")


def tube_with_centerline(length=10, radius=1, dims=(7, 7, 14)):
    mask = np.zeros(dims)
    c = dims[0] // 2
    voxels = []
    for z in range(2, 2 + length):
        for dx in range(-radius, radius + 1):
            for dy in range(-radius, radius + 1):
                if dx * dx + dy * dy <= radius * radius:
                    mask[c + dx, c + dy, z] = 1
        voxels.append(VoxelCoord(c, c, z))
    return binary(mask), CenterlineTruth((tuple(voxels),))


def brute_surface_distances(pred_surf, gt_surf, spacing):
    """O(N^2) pairwise nearest surface distances, both directions pooled."""
    ps = np.argwhere(pred_surf) * np.asarray(spacing)
    gs = np.argwhere(gt_surf) * np.asarray(spacing)
    d_pred = [min(np.sqrt(((p - g) ** 2).sum()) for g in gs) for p in ps]
    d_gt = [min(np.sqrt(((g - p) ** 2).sum()) for p in ps) for g in gs]
    return np.array(d_pred), np.array(d_gt)


class TestPerfectPrediction:
    def test_all_metrics_ideal(self):
        pred, centerline = tube_with_centerline()
        report = evaluate_case(pred, pred, centerline, 1.0, SKEL)
        assert report.cldice_pct == 100.0
        assert report.nsdice_pct == 100.0
        assert report.hd95_mm == 0.0
        assert report.td_pct == 100.0 and report.bd_pct == 100.0
        assert report.betti0_error == 0
        assert report.dice_pct == 100.0
        assert report.flags == ()


class TestBetti0Error:
    def test_identical(self):
        gt, _ = tube_with_centerline()
        assert betti0_error(gt, gt) == 0

    def test_split_into_four(self):
        gt = np.zeros((12, 3, 3))
        gt[:, 1, 1] = 1
        pred = gt.copy()
        pred[2, 1, 1] = pred[5, 1, 1] = pred[8, 1, 1] = 0
        assert betti0_error(binary(pred), binary(gt)) == 3


class TestClDice:
    def test_empty_prediction_flagged(self):
        gt, centerline = tube_with_centerline()
        empty = binary(np.zeros(gt.dims))
        value, flags = cl_dice(empty, gt, centerline, SKEL)
        assert value == 0.0 and "empty-skeleton" in flags

    def test_half_coverage_harmonic_mean(self):
        # two equal branches; prediction covers exactly one of them
        dims = (19, 7, 12)
        mask = np.zeros(dims)
        branch_a = tuple(VoxelCoord(4, 3, z) for z in range(1, 11))
        branch_b = tuple(VoxelCoord(14, 3, z) for z in range(1, 11))
        for v in branch_a + branch_b:
            mask[v.x - 1 : v.x + 2, v.y - 1 : v.y + 2, v.z] = 1
        gt = binary(mask)
        pred_mask = mask.copy()
        pred_mask[10:, :, :] = 0  # drop branch b entirely
        pred = binary(pred_mask)
        centerline = CenterlineTruth((branch_a, branch_b))
        value, flags = cl_dice(pred, gt, centerline, SKEL)
        assert flags == ()
        assert value == pytest.approx(200.0 * 1.0 * 0.5 / 1.5, abs=1e-9)

    def test_gt_skeleton_fallback_without_centerline(self):
        pred, _ = tube_with_centerline()
        value, flags = cl_dice(pred, pred, None, SKEL)
        assert value == 100.0 and flags == ()


class TestNsdice:
    def test_identical_masks(self):
        gt, _ = tube_with_centerline()
        value, flags = nsdice(gt, gt, 1.0)
        assert value == 100.0 and flags == ()

    def test_dilated_by_one_within_tolerance(self):
        gt = np.zeros((10, 10, 10))
        gt[3:7, 3:7, 3:7] = 1
        grown = dilate_values(gt, "separable-3") > 0  # 6-connected dilation
        value, flags = nsdice(binary(grown), binary(gt), 1.0)
        assert flags == ()
        assert value == 100.0

    def test_translated_strictly_below_100(self):
        gt = np.zeros((14, 8, 8))
        gt[2:5, 3:6, 3:6] = 1
        pred = np.zeros_like(gt)
        pred[7:10, 3:6, 3:6] = 1  # shifted by 5 voxels
        value, _ = nsdice(binary(pred), binary(gt), 1.0)
        assert value < 100.0

    def test_both_empty_flagged(self):
        empty = binary(np.zeros((3, 3, 3)))
        value, flags = nsdice(empty, empty, 1.0)
        assert value == 100.0 and "empty-surfaces" in flags

    def test_matches_brute_force_membership(self):
        rng = np.random.default_rng(0)
        for _ in range(15):
            dims = tuple(rng.integers(3, 9, size=3))
            a = rng.random(dims) > 0.6
            b = rng.random(dims) > 0.6
            sa, sb = surface_voxels(a), surface_voxels(b)
            if not sa.any() or not sb.any():
                continue
            for tol in (0.9, 1.0, 1.6):
                value, _ = nsdice(binary(a), binary(b), tol)
                d_pred, d_gt = brute_surface_distances(sa, sb, (1.0, 1.0, 1.0))
                expected = 100.0 * ((d_pred <= tol).sum() + (d_gt <= tol).sum()) / (
                    sa.sum() + sb.sum()
                )
                assert value == pytest.approx(expected, abs=1e-12)


class TestHd95:
    def test_identical_masks_zero(self):
        gt, _ = tube_with_centerline()
        assert hd95(gt, gt) == 0.0

    def test_unit_cubes_offset(self):
        a = np.zeros((8, 3, 3))
        b = np.zeros((8, 3, 3))
        a[1, 1, 1] = 1
        b[4, 1, 1] = 1
        assert hd95(binary(a), binary(b)) == pytest.approx(3.0, abs=1e-12)

    def test_spacing_scales_distances(self):
        a = np.zeros((8, 3, 3))
        b = np.zeros((8, 3, 3))
        a[1, 1, 1] = 1
        b[4, 1, 1] = 1
        sp = (2.0, 1.0, 1.0)
        assert hd95(binary(a, sp), binary(b, sp)) == pytest.approx(6.0, abs=1e-12)

    def test_empty_mask_names_side(self):
        gt, _ = tube_with_centerline()
        empty = binary(np.zeros(gt.dims))
        with pytest.raises(ToposculptError, match="pred"):
            hd95(empty, gt)
        with pytest.raises(ToposculptError, match="gt"):
            hd95(gt, empty)

    def test_matches_brute_force_order_statistics(self):
        rng = np.random.default_rng(1)
        checked = 0
        for _ in range(25):
            dims = tuple(rng.integers(3, 9, size=3))
            a = rng.random(dims) > 0.55
            b = rng.random(dims) > 0.55
            if not a.any() or not b.any():
                continue
            sa, sb = surface_voxels(a), surface_voxels(b)
            if not sa.any() or not sb.any():
                continue
            got = hd95(binary(a), binary(b))
            d_pred, d_gt = brute_surface_distances(sa, sb, (1.0, 1.0, 1.0))
            expected = float(np.percentile(np.concatenate([d_pred, d_gt]), 95.0))
            assert got == pytest.approx(expected, abs=1e-12)
            checked += 1
        assert checked >= 10


class TestTreeBranchDetected:
    def test_superset_prediction(self):
        gt, centerline = tube_with_centerline()
        td, bd = tree_branch_detected(gt, centerline)
        assert td == 100.0 and bd == 100.0

    def test_partial_coverage_td(self):
        pred = np.zeros((3, 3, 12))
        voxels = tuple(VoxelCoord(1, 1, z) for z in range(1, 11))
        for v in voxels[:7]:
            pred[v] = 1
        td, _ = tree_branch_detected(binary(pred), CenterlineTruth((voxels,)))
        assert td == pytest.approx(70.0)

    def test_branch_detection_threshold_strict(self):
        voxels = tuple(VoxelCoord(1, 1, z) for z in range(1, 11))
        cl = CenterlineTruth((voxels,))
        pred8 = np.zeros((3, 3, 12))
        for v in voxels[:8]:
            pred8[v] = 1
        _, bd = tree_branch_detected(binary(pred8), cl)
        assert bd == 0.0  # 8/10 is not strictly above 80%
        pred9 = np.zeros((3, 3, 12))
        for v in voxels[:9]:
            pred9[v] = 1
        _, bd = tree_branch_detected(binary(pred9), cl)
        assert bd == 100.0

    def test_dilation_never_decreases(self):
        rng = np.random.default_rng(2)
        gt, centerline = tube_with_centerline()
        pred = (gt.data.astype(bool) & (rng.random(gt.dims) > 0.3)).astype(np.uint8)
        base_td, base_bd = tree_branch_detected(binary(pred), centerline)
        grown = dilate_values(pred.astype(float), "cubic-3") > 0
        big_td, big_bd = tree_branch_detected(binary(grown), centerline)
        assert big_td >= base_td and big_bd >= base_bd


class TestAxisPermutationInvariance:
    def test_all_metrics_invariant(self):
        rng = np.random.default_rng(3)
        a = rng.random((6, 7, 8)) > 0.55
        b = rng.random((6, 7, 8)) > 0.55
        a[2, 2, 2] = b[3, 3, 3] = True  # keep non-empty
        spacing = (1.0, 1.5, 2.0)
        base = (
            nsdice(binary(a, spacing), binary(b, spacing), 1.2)[0],
            hd95(binary(a, spacing), binary(b, spacing)),
            betti0_error(binary(a, spacing), binary(b, spacing)),
            dice(binary(a, spacing), binary(b, spacing)),
        )
        for perm in itertools.permutations(range(3)):
            pa = np.transpose(a, perm)
            pb = np.transpose(b, perm)
            psp = tuple(spacing[i] for i in perm)
            got = (
                nsdice(binary(pa, psp), binary(pb, psp), 1.2)[0],
                hd95(binary(pa, psp), binary(pb, psp)),
                betti0_error(binary(pa, psp), binary(pb, psp)),
                dice(binary(pa, psp), binary(pb, psp)),
            )
            assert got == pytest.approx(base, abs=1e-9)


class TestEvaluateCase:
    def test_without_centerline_flags_nan(self):
        pred, _ = tube_with_centerline()
        report = evaluate_case(pred, pred, None, 1.0, SKEL)
        assert "no-centerline" in report.flags
        assert np.isnan(report.td_pct) and np.isnan(report.bd_pct)

    def test_grid_mismatch_rejected(self):
        a = binary(np.zeros((3, 3, 3)))
        b = binary(np.zeros((4, 3, 3)))
        with pytest.raises(ToposculptError):
            evaluate_case(a, b)
