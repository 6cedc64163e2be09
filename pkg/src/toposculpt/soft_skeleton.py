"""Differentiable morphological soft skeletonization.

The skeleton of a soft mask is extracted by iterating soft erosions and
openings (min/max pooling over small neighborhoods) and accumulating the
residues ``relu(v - open(v))``. Two pooling neighborhoods are supported:

* ``separable-3``: three axis-aligned 3-voxel windows (a 7-voxel cross),
  9 comparisons per voxel, the default;
* ``cubic-3``: the full 3x3x3 window, 27 comparisons per voxel.

The pooling choice governs the erosions; inside the skeleton recursion the
opening's dilation always uses the full 3x3x3 window, the standard
construction, which is what actually thins tube cross-sections down to
single-voxel spines. Borders use replicate padding so volume faces do not
produce artificial skeleton responses. The iteration count must reach the
maximum tube radius (in voxels) for full thinning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ToposculptError
from .volume import ROLE_BINARY, ROLE_PROBABILITY, Volume

POOL_SEPARABLE = "separable-3"
POOL_CUBIC = "cubic-3"
_POOLINGS = (POOL_SEPARABLE, POOL_CUBIC)


@dataclass(frozen=True)
class SkeletonParams:
    """Iteration count and pooling neighborhood for soft skeletonization."""

    iterations: int = 4
    pooling: str = POOL_SEPARABLE

    def __post_init__(self):
        if self.iterations < 1:
            raise ToposculptError(f"skeleton iterations must be >= 1, got {self.iterations}")
        if self.pooling not in _POOLINGS:
            raise ToposculptError(f"unknown pooling {self.pooling!r}, expected one of {_POOLINGS}")


def erode_values(a: np.ndarray, pooling: str = POOL_SEPARABLE) -> np.ndarray:
    """Soft erosion: elementwise minimum over the pooling neighborhood."""
    if pooling == POOL_CUBIC:
        return ndimage.minimum_filter(a, size=3, mode="nearest")
    parts = [ndimage.minimum_filter1d(a, 3, axis=ax, mode="nearest") for ax in range(3)]
    return np.minimum(np.minimum(parts[0], parts[1]), parts[2])


def dilate_values(a: np.ndarray, pooling: str = POOL_SEPARABLE) -> np.ndarray:
    """Soft dilation: elementwise maximum over the pooling neighborhood."""
    if pooling == POOL_CUBIC:
        return ndimage.maximum_filter(a, size=3, mode="nearest")
    parts = [ndimage.maximum_filter1d(a, 3, axis=ax, mode="nearest") for ax in range(3)]
    return np.maximum(np.maximum(parts[0], parts[1]), parts[2])


def open_values(a: np.ndarray, pooling: str = POOL_SEPARABLE) -> np.ndarray:
    """Soft opening: pooled erosion followed by full-cube dilation."""
    return dilate_values(erode_values(a, pooling), POOL_CUBIC)


def skeleton_values(a: np.ndarray, iterations: int, pooling: str = POOL_SEPARABLE) -> np.ndarray:
    """Iterative soft skeleton of an array with values in [0, 1].

    Accumulates opening residues over successive erosions; the result stays
    in [0, 1] and vanishes wherever the input is zero.
    """
    v = a.astype(np.float64, copy=True)
    skel = np.maximum(v - open_values(v, pooling), 0.0)
    for _ in range(iterations):
        v = erode_values(v, pooling)
        residue = np.maximum(v - open_values(v, pooling), 0.0)
        skel = skel + np.maximum(residue * (1.0 - skel), 0.0)
    return skel


def _check_soft_input(v: Volume) -> np.ndarray:
    if v.role not in (ROLE_PROBABILITY, ROLE_BINARY):
        raise ToposculptError(f"soft morphology expects values in [0, 1], got a {v.role} volume")
    return v.data.astype(np.float64, copy=False)


def _rewrap(v: Volume, out: np.ndarray) -> Volume:
    return Volume(out, v.spacing, v.role)


def soft_erode(v: Volume, pooling: str = POOL_SEPARABLE) -> Volume:
    """Soft-erode a volume; output is elementwise <= input."""
    return _rewrap(v, erode_values(_check_soft_input(v), pooling))


def soft_dilate(v: Volume, pooling: str = POOL_SEPARABLE) -> Volume:
    """Soft-dilate a volume; output is elementwise >= input."""
    return _rewrap(v, dilate_values(_check_soft_input(v), pooling))


def soft_skel(v: Volume, params: SkeletonParams) -> Volume:
    """Soft skeleton of a volume with values in [0, 1]."""
    return _rewrap(v, skeleton_values(_check_soft_input(v), params.iterations, params.pooling))
