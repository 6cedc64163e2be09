import numpy as np
import pytest

from toposculpt import SkeletonParams, ToposculptError, Volume, soft_dilate, soft_erode, soft_skel
from toposculpt.soft_skeleton import POOL_CUBIC, POOL_SEPARABLE, skeleton_values
from toposculpt.volume import ROLE_LOGIT


def prob(arr):
    return Volume(np.asarray(arr, dtype=np.float64))


def solid_tube(radius, length=16, pad=4):
    side = 2 * radius + 2 * pad + 1
    c = side // 2
    vol = np.zeros((side, side, length + 2 * pad))
    yy, xx = np.mgrid[0:side, 0:side]
    disc = (xx - c) ** 2 + (yy - c) ** 2 <= radius * radius
    vol[:, :, pad : pad + length] = disc[:, :, None]
    return vol


class TestErodeDilate:
    def test_constant_unchanged(self):
        v = prob(np.full((4, 4, 4), 0.3))
        for pooling in (POOL_SEPARABLE, POOL_CUBIC):
            np.testing.assert_array_equal(soft_erode(v, pooling).data, v.data)
            np.testing.assert_array_equal(soft_dilate(v, pooling).data, v.data)

    def test_single_voxel_erodes_away(self):
        data = np.zeros((5, 5, 5))
        data[2, 2, 2] = 1.0
        out = soft_erode(prob(data))
        assert (out.data == 0).all()

    def test_cube_erodes_to_center(self):
        data = np.zeros((5, 5, 5))
        data[1:4, 1:4, 1:4] = 1.0
        out = soft_erode(prob(data), POOL_CUBIC)
        expected = np.zeros((5, 5, 5))
        expected[2, 2, 2] = 1.0
        np.testing.assert_array_equal(out.data, expected)

    def test_single_voxel_dilates_to_block(self):
        data = np.zeros((5, 5, 5))
        data[2, 2, 2] = 1.0
        out = soft_dilate(prob(data), POOL_CUBIC)
        expected = np.zeros((5, 5, 5))
        expected[1:4, 1:4, 1:4] = 1.0
        np.testing.assert_array_equal(out.data, expected)

    def test_dilate_clips_at_border(self):
        data = np.zeros((3, 3, 3))
        data[0, 0, 0] = 1.0
        out = soft_dilate(prob(data), POOL_CUBIC)
        assert out.data[0, 0, 0] == 1.0 and out.data[1, 1, 1] == 1.0
        assert out.data.sum() == 8  # 2x2x2 corner block

    def test_line_dilation_separable(self):
        data = np.array([0.0, 0.4, 0.0, 0.0]).reshape(1, 1, 4)
        out = soft_dilate(prob(data), POOL_SEPARABLE)
        np.testing.assert_allclose(out.data.ravel(order="F"), [0.4, 0.4, 0.4, 0.0])

    def test_sandwich_bounds(self):
        rng = np.random.default_rng(0)
        for pooling in (POOL_SEPARABLE, POOL_CUBIC):
            data = rng.random((6, 7, 5))
            v = prob(data)
            assert (soft_erode(v, pooling).data <= data).all()
            assert (soft_dilate(v, pooling).data >= data).all()

    def test_rejects_logit_volumes(self):
        with pytest.raises(ToposculptError):
            soft_erode(Volume(np.zeros((2, 2, 2)), role=ROLE_LOGIT))


class TestSoftSkel:
    def test_all_zero(self):
        out = soft_skel(prob(np.zeros((4, 4, 4))), SkeletonParams(2))
        assert (out.data == 0).all()

    def test_isolated_voxel_retained(self):
        data = np.zeros((5, 5, 5))
        data[2, 2, 2] = 1.0
        out = soft_skel(prob(data), SkeletonParams(2))
        assert out.data[2, 2, 2] == 1.0

    def test_thin_line_retained(self):
        data = np.zeros((3, 3, 11))
        data[1, 1, 1:10] = 1.0
        out = soft_skel(prob(data), SkeletonParams(2))
        support = out.data > 0
        assert support[1, 1, 2:9].all()  # interior of the line survives
        assert support[..., :].sum() <= 9  # nothing appears off the line
        assert (out.data <= 1.0).all() and (out.data >= 0.0).all()

    def test_support_containment_random(self):
        rng = np.random.default_rng(1)
        data = rng.random((8, 8, 8)) * (rng.random((8, 8, 8)) > 0.5)
        out = soft_skel(prob(data), SkeletonParams(3))
        assert (out.data >= 0.0).all() and (out.data <= 1.0).all()
        assert (out.data[data == 0.0] == 0.0).all()

    @pytest.mark.parametrize("radius", [1, 2, 3])
    def test_tube_thins_to_narrow_spine(self, radius):
        vol = solid_tube(radius)
        for iters in (radius, radius + 1):
            skel = skeleton_values(vol, iterations=iters) > 0
            assert skel.any()
            for z in range(vol.shape[2]):
                sl = skel[:, :, z]
                if sl.any():
                    xs, ys = np.nonzero(sl)
                    assert xs.max() - xs.min() + 1 <= 2
                    assert ys.max() - ys.min() + 1 <= 2

    def test_binary_volume_stays_binary(self):
        data = np.zeros((5, 5, 9))
        data[2, 2, 1:8] = 1
        v = Volume(data.astype(np.uint8), role="binary")
        out = soft_skel(v, SkeletonParams(2))
        assert out.role == "binary"

    def test_params_validation(self):
        with pytest.raises(ToposculptError):
            SkeletonParams(iterations=0)
        with pytest.raises(ToposculptError):
            SkeletonParams(iterations=2, pooling="blob-9")
