"""Dense 3D scalar grids, voxel neighborhoods, and elementwise maps.

A volume is a dense ``(nx, ny, nz)`` grid indexed ``data[x, y, z]`` with a
physical voxel spacing in millimeters. The canonical linearization used by
file I/O and all deterministic tie-breaking is x-fastest::

    linear = x + nx * (y + ny * z)

which is ``data.ravel(order="F")`` for the array layout above. Every volume
carries a role tag (probability, logit, or binary); role-restricted
operations check the tag on entry.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ToposculptError, VolumeRoleError

ROLE_PROBABILITY = "probability"
ROLE_LOGIT = "logit"
ROLE_BINARY = "binary"
_ROLES = (ROLE_PROBABILITY, ROLE_LOGIT, ROLE_BINARY)

# Probability excursions beyond this are hard errors; smaller ones are
# clamped silently (accumulated floating-point drift, not bugs).
PROBABILITY_TOLERANCE = 1e-9


class VoxelCoord(NamedTuple):
    """Integer voxel coordinate; validity (in-bounds) is the caller's job."""

    x: int
    y: int
    z: int


class Connectivity(enum.IntEnum):
    """Voxel adjacency: 6 (faces), 18 (faces+edges), or 26 (full cube)."""

    C6 = 6
    C18 = 18
    C26 = 26


def connectivity_offsets(conn: Connectivity) -> np.ndarray:
    """Return the (k, 3) array of neighbor offsets for a connectivity kind.

    Offsets are sorted lexicographically by (dx, dy, dz) so every consumer
    enumerates neighborhoods in the same deterministic order.
    """
    conn = Connectivity(conn)
    offsets = []
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                if dx == dy == dz == 0:
                    continue
                order = abs(dx) + abs(dy) + abs(dz)
                if conn == Connectivity.C6 and order > 1:
                    continue
                if conn == Connectivity.C18 and order > 2:
                    continue
                offsets.append((dx, dy, dz))
    offsets.sort()
    return np.array(offsets, dtype=np.int64)


@dataclass(eq=False)
class Volume:
    """A dense 3D scalar grid with spacing and a role tag.

    Args:
        data: array of shape (nx, ny, nz), indexed ``data[x, y, z]``.
        spacing: millimeters per voxel along each axis, all > 0.
        role: one of ``probability``, ``logit``, ``binary``.

    Probability volumes are clamped into [0, 1] when they stray by at most
    ``PROBABILITY_TOLERANCE``; larger violations raise. Binary volumes must
    contain exactly 0 and 1 values. Volumes are treated as immutable once
    constructed.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    role: str = ROLE_PROBABILITY

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ToposculptError(f"volume data must be 3D, got shape {self.data.shape}")
        if min(self.data.shape) < 1:
            raise ToposculptError(f"volume dims must be positive, got {self.data.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ToposculptError(f"spacing must be three positive floats, got {self.spacing}")
        if self.role not in _ROLES:
            raise ToposculptError(f"unknown volume role {self.role!r}")
        if self.role == ROLE_PROBABILITY:
            self.data = self.data.astype(np.float64, copy=False)
            lo = float(self.data.min())
            hi = float(self.data.max())
            if lo < -PROBABILITY_TOLERANCE or hi > 1.0 + PROBABILITY_TOLERANCE:
                raise ToposculptError(
                    f"probability volume out of range: min={lo!r}, max={hi!r}"
                )
            if lo < 0.0 or hi > 1.0:
                self.data = np.clip(self.data, 0.0, 1.0)
        elif self.role == ROLE_LOGIT:
            self.data = self.data.astype(np.float64, copy=False)
        else:
            uniq = np.unique(self.data)
            if not np.isin(uniq, (0, 1)).all():
                raise ToposculptError(
                    f"binary volume has values other than 0/1: {uniq[:8]}"
                )
            self.data = self.data.astype(np.uint8, copy=False)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def nvox(self) -> int:
        return int(self.data.size)

    def require_role(self, role: str) -> None:
        if self.role != role:
            raise VolumeRoleError(f"expected a {role} volume, got {self.role}")

    def same_grid(self, other: "Volume") -> bool:
        return self.dims == other.dims and self.spacing == other.spacing


def linear_index(coord, dims) -> int:
    """x-fastest linear index of a voxel coordinate."""
    x, y, z = coord
    nx, ny, _ = dims
    return int(x) + nx * (int(y) + ny * int(z))


def coord_from_linear(lin: int, dims) -> VoxelCoord:
    """Inverse of :func:`linear_index`."""
    nx, ny, _ = dims
    x = lin % nx
    rem = lin // nx
    return VoxelCoord(x, rem % ny, rem // ny)


def neighbors(v: VoxelCoord, dims, conn: Connectivity) -> list[VoxelCoord]:
    """In-bounds voxels adjacent to ``v`` under the given connectivity.

    Never includes ``v`` itself; boundary voxels get clipped neighborhoods.
    """
    nx, ny, nz = dims
    if not (0 <= v[0] < nx and 0 <= v[1] < ny and 0 <= v[2] < nz):
        raise ToposculptError(f"voxel {tuple(v)} out of bounds for dims {tuple(dims)}")
    out = []
    for dx, dy, dz in connectivity_offsets(conn):
        x, y, z = v[0] + dx, v[1] + dy, v[2] + dz
        if 0 <= x < nx and 0 <= y < ny and 0 <= z < nz:
            out.append(VoxelCoord(int(x), int(y), int(z)))
    return out


def binarize(p: Volume, threshold: float) -> Volume:
    """Threshold a probability volume: voxel > threshold becomes 1, else 0."""
    p.require_role(ROLE_PROBABILITY)
    if not 0.0 < threshold < 1.0:
        raise ToposculptError(f"threshold must lie in (0, 1), got {threshold}")
    mask = (p.data > threshold).astype(np.uint8)
    return Volume(mask, p.spacing, ROLE_BINARY)


def sigmoid(l: Volume) -> Volume:
    """Elementwise logistic map of a logit volume into probabilities.

    The output is clamped to the open interval (0, 1) representable in
    float64, so extreme logits saturate without ever reaching 0 or 1
    exactly. Non-finite inputs raise, naming the first offending voxel.
    """
    l.require_role(ROLE_LOGIT)
    finite = np.isfinite(l.data)
    if not finite.all():
        bad = np.argwhere(~finite)[0]
        raise ToposculptError(
            f"non-finite logit {l.data[tuple(bad)]!r} at voxel {tuple(int(c) for c in bad)}"
        )
    out = sigmoid_array(l.data)
    return Volume(out, l.spacing, ROLE_PROBABILITY)


def sigmoid_array(values: np.ndarray) -> np.ndarray:
    """Stable elementwise logistic map on a raw array, output in open (0, 1)."""
    out = np.empty_like(values, dtype=np.float64)
    pos = values >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-values[pos]))
    ev = np.exp(values[~pos])
    out[~pos] = ev / (1.0 + ev)
    np.clip(out, np.finfo(np.float64).tiny, 1.0 - np.finfo(np.float64).epsneg, out=out)
    return out
