import numpy as np
import pytest

from toposculpt import (
    Connectivity,
    PhantomConfig,
    ToposculptError,
    binarize,
    corrupt,
    generate_case,
    generate_tree,
)
from toposculpt.cubical_ph import label_components

SMALL = dict(dims=(64, 64, 64), root_radius=3.0, branch_length=(18.0, 22.0))


class TestGenerateTree:
    def test_single_trunk(self):
        gt, cl = generate_tree(PhantomConfig(seed=1, generations=1, **SMALL))
        assert cl.branch_count == 1
        _, n = label_components(gt.data.astype(bool), Connectivity.C26)
        assert n == 1

    def test_three_generations_complete_binary_tree(self):
        gt, cl = generate_tree(PhantomConfig(seed=2, generations=3, **SMALL))
        assert cl.branch_count == 7  # 2^3 - 1

    def test_deterministic_in_seed(self):
        cfg = PhantomConfig(seed=3, generations=2, **SMALL)
        gt1, cl1 = generate_tree(cfg)
        gt2, cl2 = generate_tree(cfg)
        np.testing.assert_array_equal(gt1.data, gt2.data)
        assert cl1 == cl2

    def test_different_seeds_differ(self):
        gt1, _ = generate_tree(PhantomConfig(seed=4, generations=2, **SMALL))
        gt2, _ = generate_tree(PhantomConfig(seed=5, generations=2, **SMALL))
        assert (gt1.data != gt2.data).any()

    def test_centerline_inside_mask(self):
        for seed in range(4):
            gt, cl = generate_tree(PhantomConfig(seed=seed, generations=3, **SMALL))
            mask = gt.data.astype(bool)
            for branch in cl.branches:
                for v in branch:
                    assert mask[v]

    def test_single_component_across_seeds(self):
        for seed in range(6):
            gt, _ = generate_tree(PhantomConfig(seed=seed, generations=3, **SMALL))
            _, n = label_components(gt.data.astype(bool), Connectivity.C26)
            assert n == 1

    def test_too_small_volume_raises(self):
        with pytest.raises(ToposculptError):
            generate_tree(PhantomConfig(seed=0, generations=3, dims=(24, 24, 24),
                                        root_radius=3.0, branch_length=(30.0, 34.0)))


class TestCorrupt:
    def test_clean_corruption_matches_gt_near_boundary(self):
        cfg = PhantomConfig(seed=6, generations=2, breaks=0, blobs=0,
                            noise_amplitude=0.0, **SMALL)
        case = generate_case(cfg)
        hard = binarize(case.init_prob, 0.5)
        gt = case.gt_mask.data.astype(bool)
        mism = hard.data.astype(bool) ^ gt
        if mism.any():
            # mismatches only within one voxel of the mask boundary
            from scipy import ndimage

            dist_in = ndimage.distance_transform_edt(gt)
            dist_out = ndimage.distance_transform_edt(~gt)
            near = (dist_in <= 1.8) | (dist_out <= 1.8)
            assert (near | ~mism).all()
        _, n = label_components(hard.data.astype(bool), Connectivity.C26)
        assert n == 1

    def test_blobs_add_exactly_their_count(self):
        cfg = PhantomConfig(seed=7, generations=2, breaks=0, blobs=4, **SMALL)
        case = generate_case(cfg)
        hard = binarize(case.init_prob, 0.5)
        _, n = label_components(hard.data.astype(bool), Connectivity.C26)
        assert n == 1 + 4
        assert sum(1 for r in case.corruption_record if r["kind"] == "blob") == 4

    def test_breaks_disconnect(self):
        cfg = PhantomConfig(seed=8, generations=1, breaks=3, blobs=0,
                            dims=(64, 64, 64), root_radius=3.0,
                            branch_length=(36.0, 40.0), break_radius=(3.6, 4.2))
        case = generate_case(cfg)
        hard = binarize(case.init_prob, 0.5)
        _, n = label_components(hard.data.astype(bool), Connectivity.C26)
        assert n >= 2
        assert sum(1 for r in case.corruption_record if r["kind"] == "break") == 3

    def test_mixed_corruption_component_floor(self):
        cfg = PhantomConfig(seed=9, generations=3, breaks=3, blobs=3, **SMALL)
        case = generate_case(cfg)
        hard = binarize(case.init_prob, 0.5)
        _, n = label_components(hard.data.astype(bool), Connectivity.C26)
        assert n >= 1 + 3 + 1

    def test_deterministic_case(self):
        cfg = PhantomConfig(seed=10, generations=2, breaks=2, blobs=2, **SMALL)
        a = generate_case(cfg)
        b = generate_case(cfg)
        np.testing.assert_array_equal(a.init_prob.data, b.init_prob.data)
        assert a.corruption_record == b.corruption_record

    def test_probability_range_clamped(self):
        cfg = PhantomConfig(seed=11, generations=2, breaks=1, blobs=1,
                            noise_amplitude=0.3, **SMALL)
        case = generate_case(cfg)
        assert case.init_prob.data.min() >= 0.01
        assert case.init_prob.data.max() <= 0.99

    def test_config_validation(self):
        with pytest.raises(ToposculptError):
            PhantomConfig(generations=0)
        with pytest.raises(ToposculptError):
            PhantomConfig(radius_decay=1.5)
        with pytest.raises(ToposculptError):
            PhantomConfig(fg_prob=0.4)
