"""0-dimensional persistent homology of superlevel sets on voxel grids.

The filtration is vertex-based: voxels are vertices, adjacency follows the
chosen connectivity, and voxels enter in decreasing value order as the
threshold sweeps down from 1. Merging components obey the elder rule (the
component with the lower birth dies, at the inserted voxel). Components
that survive the whole sweep are essential and die at 0 by convention, so
an ideal structure has persistence 1. Voxels with value exactly 0 never
enter the filtration; an all-zero volume yields an empty barcode.

Ties are broken by the x-fastest linear index, which pins birth and death
voxels deterministically.

Two interchangeable kernels exist: a compiled Cython extension and a pure
Python fallback. The compiled one is picked at import when available; set
``TOPOSCULPT_PH_BACKEND=python|compiled`` to force a choice.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from . import _ph_python
from .errors import ToposculptError
from .volume import (
    ROLE_PROBABILITY,
    Connectivity,
    VoxelCoord,
    Volume,
    connectivity_offsets,
    coord_from_linear,
)

try:
    from . import _ph_core

    HAVE_COMPILED = True
except ImportError:  # extension not built; pure-Python twin takes over
    _ph_core = None
    HAVE_COMPILED = False

BACKEND_COMPILED = "compiled"
BACKEND_PYTHON = "python"


def _resolve_backend(name: Optional[str]) -> str:
    if name is None:
        name = os.environ.get("TOPOSCULPT_PH_BACKEND", "auto")
    if name == "auto":
        return BACKEND_COMPILED if HAVE_COMPILED else BACKEND_PYTHON
    if name == BACKEND_COMPILED:
        if not HAVE_COMPILED:
            raise ToposculptError("compiled persistence kernel requested but not built")
        return BACKEND_COMPILED
    if name == BACKEND_PYTHON:
        return BACKEND_PYTHON
    raise ToposculptError(f"unknown persistence backend {name!r}")


def active_backend() -> str:
    """Name of the kernel compute_ph0 uses by default."""
    return _resolve_backend(None)


@dataclass(frozen=True)
class PersistencePair:
    """One 0-dimensional feature of the superlevel filtration.

    ``birth``/``death`` are filtration values; ``birth_voxel`` attains the
    birth value and, for non-essential pairs, ``death_voxel`` attains the
    death value. Essential pairs never die: death is 0 and death_voxel is
    absent.
    """

    birth: float
    death: float
    birth_voxel: VoxelCoord
    death_voxel: Optional[VoxelCoord]
    essential: bool

    @property
    def persistence(self) -> float:
        return self.birth - self.death


@dataclass(frozen=True)
class Barcode:
    """Pairs sorted by persistence desc, then birth desc, then birth voxel."""

    pairs: tuple[PersistencePair, ...]

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def n_essential(self) -> int:
        return sum(1 for p in self.pairs if p.essential)

    def betti0_at(self, threshold: float) -> int:
        """Components of the strict superlevel set implied by the pairs."""
        return sum(1 for p in self.pairs if p.birth > threshold >= p.death)


def _sort_key(pair: PersistencePair):
    return (-(pair.birth - pair.death), -pair.birth, pair.birth_voxel)


def compute_ph0(
    p: Volume,
    conn: Connectivity = Connectivity.C26,
    backend: Optional[str] = None,
) -> Barcode:
    """0-dim superlevel-set persistence of a probability volume.

    Args:
        p: probability volume.
        conn: voxel adjacency for component merging.
        backend: kernel override ("compiled" or "python"); default is the
            import-time selection.

    Returns:
        The sorted barcode; deterministic for a given input.
    """
    p.require_role(ROLE_PROBABILITY)
    nx, ny, nz = p.dims
    flat = np.ascontiguousarray(p.data.ravel(order="F"), dtype=np.float64)
    offsets = connectivity_offsets(conn)
    kernel = _ph_core if _resolve_backend(backend) == BACKEND_COMPILED else _ph_python
    pair_birth, pair_death, essential = kernel.kernel_ph0(flat, nx, ny, nz, offsets)

    dims = (nx, ny, nz)
    pairs = [
        PersistencePair(
            birth=float(flat[b]),
            death=float(flat[d]),
            birth_voxel=coord_from_linear(int(b), dims),
            death_voxel=coord_from_linear(int(d), dims),
            essential=False,
        )
        for b, d in zip(pair_birth, pair_death)
    ]
    pairs.extend(
        PersistencePair(
            birth=float(flat[b]),
            death=0.0,
            birth_voxel=coord_from_linear(int(b), dims),
            death_voxel=None,
            essential=True,
        )
        for b in essential
    )
    pairs.sort(key=_sort_key)
    return Barcode(tuple(pairs))


def _label_structure(conn: Connectivity) -> np.ndarray:
    rank = {Connectivity.C6: 1, Connectivity.C18: 2, Connectivity.C26: 3}[Connectivity(conn)]
    return ndimage.generate_binary_structure(3, rank)


def label_components(mask: np.ndarray, conn: Connectivity = Connectivity.C26):
    """Label connected components of a boolean mask; returns (labels, count)."""
    return ndimage.label(mask, structure=_label_structure(conn))


def betti0_at(p: Volume, threshold: float, conn: Connectivity = Connectivity.C26) -> int:
    """Number of connected components of {voxel : value > threshold}."""
    p.require_role(ROLE_PROBABILITY)
    if not 0.0 < threshold < 1.0:
        raise ToposculptError(f"threshold must lie in (0, 1), got {threshold}")
    _, count = label_components(p.data > threshold, conn)
    return int(count)


ORACLE_MAX_VOXELS = 32 ** 3


def oracle_betti_curve(
    p: Volume,
    conn: Connectivity = Connectivity.C26,
    allow_large: bool = False,
) -> list[tuple[float, int]]:
    """Exhaustive Betti-0 curve by fresh component labeling per threshold.

    Validation oracle for :func:`compute_ph0`, deliberately independent of
    the union-find kernels: for every distinct positive voxel value v in
    descending order it counts components of {value >= v} from scratch.
    Guarded to small volumes (<= 32^3) unless ``allow_large`` is set.
    """
    p.require_role(ROLE_PROBABILITY)
    if p.nvox > ORACLE_MAX_VOXELS and not allow_large:
        raise ToposculptError(
            f"oracle guard: {p.nvox} voxels exceeds {ORACLE_MAX_VOXELS}; pass allow_large to override"
        )
    distinct = np.unique(p.data)
    distinct = distinct[distinct > 0.0][::-1]
    curve = []
    for v in distinct:
        _, count = label_components(p.data >= v, conn)
        curve.append((float(v), int(count)))
    return curve
