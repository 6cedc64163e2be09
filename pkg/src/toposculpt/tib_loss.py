"""Topological-integrity loss on a probability volume and its gradient.

The loss has two parts. The correction part compares the barcode of the
current map against a component-count prior: the ``beta0`` most persistent
features are faithful and pushed toward full persistence, all others are
superfluous and pushed toward annihilation. Its subgradients live on the
recorded birth/death voxels only. The integrity part anchors the map to
the previous iterate, voxelwise (mean squared difference) and structurally
(an F-score between consecutive likelihood-weighted soft skeletons), and
is what keeps the correction from carving up healthy anatomy.

Gradient conventions: everything derived from the previous iterate is a
constant, and the hard-thresholded skeleton mask of the current map is
gradient-constant too, so structural gradients flow only through the
likelihood factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cubical_ph import Barcode, PersistencePair
from .errors import ToposculptError
from .soft_skeleton import SkeletonParams, skeleton_values
from .volume import ROLE_PROBABILITY, Volume, VoxelCoord, binarize

EPS_SKELETON = 1e-8


@dataclass(frozen=True)
class TopoPrior:
    """Expected number of connected components, each ideally persistence 1."""

    beta0: int = 1

    def __post_init__(self):
        if self.beta0 < 1:
            raise ToposculptError(f"component prior must be >= 1, got {self.beta0}")


@dataclass(frozen=True)
class TibWeights:
    """Loss weights: alpha (voxel), beta (structural), gamma (late phase)."""

    alpha: float = 1e4
    beta: float = 1e3
    gamma: float = 0.1

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ToposculptError("alpha and beta must be >= 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ToposculptError(f"gamma must lie in [0, 1], got {self.gamma}")


@dataclass
class TibLossReport:
    """Loss decomposition plus the sparse correction subgradients.

    ``l_com_voxel`` is ``alpha * MSE`` and ``l_com_struct`` is
    ``-beta * f_score``, both before the late-phase weight;
    ``l_total = l_cor + phase_gamma * (l_com_voxel + l_com_struct)``.
    ``critical_grads`` maps critical voxels to d(l_cor)/d(probability);
    ``com_grad`` is the dense, phase-weighted integrity gradient.
    """

    l_cor: float
    l_com_voxel: float
    l_com_struct: float
    l_total: float
    topo_f: float
    topo_s: float
    critical_grads: dict[VoxelCoord, float]
    phase_gamma: float = 1.0
    degenerate_skeleton: bool = False
    empty_barcode: bool = False
    com_grad: Optional[np.ndarray] = field(default=None, repr=False)


def split_features(b: Barcode, prior: TopoPrior):
    """Split a sorted barcode into (faithful, superfluous) pair tuples."""
    n = min(prior.beta0, len(b.pairs))
    return b.pairs[:n], b.pairs[n:]


def _cor_terms(b: Barcode, prior: TopoPrior):
    """Persistence sums and subgradients of the correction term.

    Returns (topo_f, topo_s, grads dict, event voxels, event values); the
    last two are the flattened per-event subgradients for vectorized
    scatter, with repeats where voxels coincide.
    """
    faithful, superfluous = split_features(b, prior)
    topo_f = sum(p.persistence for p in faithful)
    topo_s = sum(p.persistence for p in superfluous)
    voxels: list[VoxelCoord] = []
    values: list[float] = []
    for p in faithful:
        voxels.append(p.birth_voxel)
        values.append(-1.0)
        if not p.essential:
            voxels.append(p.death_voxel)
            values.append(+1.0)
    for p in superfluous:
        voxels.append(p.birth_voxel)
        values.append(+1.0)
        if not p.essential:
            voxels.append(p.death_voxel)
            values.append(-1.0)
    grads: dict[VoxelCoord, float] = {}
    for v, g in zip(voxels, values):
        grads[v] = grads.get(v, 0.0) + g
    return float(topo_f), float(topo_s), grads, voxels, values


def l_tib_cor(b: Barcode, prior: TopoPrior):
    """Correction loss ``beta0 - Topo_F + Topo_S`` and its subgradients.

    Returns (loss, critical_grads); an empty barcode yields the bare prior
    loss with no gradients.
    """
    topo_f, topo_s, grads, _, _ = _cor_terms(b, prior)
    return float(prior.beta0) - topo_f + topo_s, grads


def struc_similarity(
    p_next: Volume,
    p_prev: Volume,
    params: SkeletonParams,
    next_skeleton: Optional[np.ndarray] = None,
    prev_skeleton: Optional[np.ndarray] = None,
):
    """Structural F-score between consecutive iterates and its gradient.

    Precision integrates the previous map over the current weighted
    skeleton; sensitivity integrates the current map over the previous
    weighted skeleton. Skeleton supports may be passed in to reuse cached
    masks; they are treated as gradient constants.

    Returns:
        (f_score, grad wrt p_next, degenerate flag). A near-empty skeleton
        on either side trips the degenerate flag and zeroes both outputs;
        the same subgradient convention applies at f = 0/0.
    """
    if not p_next.same_grid(p_prev):
        raise ToposculptError("structural similarity requires matching grids")
    if next_skeleton is None:
        next_skeleton = skeleton_support(p_next, params)
    if prev_skeleton is None:
        prev_skeleton = skeleton_support(p_prev, params)

    nxt = p_next.data
    prv = p_prev.data
    sp_next = np.where(next_skeleton, nxt, 0.0)
    sp_prev = np.where(prev_skeleton, prv, 0.0)
    s_next = float(sp_next.sum())
    s_prev = float(sp_prev.sum())
    zeros = np.zeros_like(nxt)
    if s_next < EPS_SKELETON or s_prev < EPS_SKELETON:
        return 0.0, zeros, True

    prec = float((sp_next * prv).sum()) / s_next
    sens = float((sp_prev * nxt).sum()) / s_prev
    if prec + sens <= 0.0:
        return 0.0, zeros, False
    f_score = 2.0 * prec * sens / (prec + sens)

    df_dprec = 2.0 * sens * sens / (prec + sens) ** 2
    df_dsens = 2.0 * prec * prec / (prec + sens) ** 2
    grad = df_dprec * np.where(next_skeleton, prv - prec, 0.0) / s_next
    grad += df_dsens * sp_prev / s_prev
    return f_score, grad, False


def skeleton_support(p: Volume, params: SkeletonParams) -> np.ndarray:
    """Support of the soft skeleton of the binarized map (gradient constant)."""
    hard = binarize(p, 0.5).data.astype(np.float64)
    return skeleton_values(hard, params.iterations, params.pooling) > 0.0


def l_tib_com(
    p_next: Volume,
    p_prev: Volume,
    weights: TibWeights,
    params: SkeletonParams,
    next_skeleton: Optional[np.ndarray] = None,
    prev_skeleton: Optional[np.ndarray] = None,
):
    """Integrity loss ``alpha*MSE - beta*f_score`` and its dense gradient.

    Returns (value, gradient wrt p_next, degenerate flag); a degenerate
    skeleton drops the structural term.
    """
    if not p_next.same_grid(p_prev):
        raise ToposculptError("integrity loss requires matching grids")
    n = p_next.nvox
    diff = p_next.data - p_prev.data
    mse = float((diff * diff).sum()) / n
    if weights.beta > 0.0:
        f_score, f_grad, degenerate = struc_similarity(
            p_next, p_prev, params, next_skeleton, prev_skeleton
        )
    else:
        f_score, f_grad, degenerate = 0.0, 0.0, False
    value = weights.alpha * mse - weights.beta * f_score
    grad = weights.alpha * (2.0 / n) * diff - weights.beta * f_grad
    return value, grad, degenerate


def l_tib_total(
    barcode: Barcode,
    prior: TopoPrior,
    p_next: Volume,
    p_prev: Volume,
    weights: TibWeights,
    params: SkeletonParams,
    phase_gamma: float = 1.0,
    next_skeleton: Optional[np.ndarray] = None,
    prev_skeleton: Optional[np.ndarray] = None,
) -> TibLossReport:
    """Full loss report for one refinement step.

    ``phase_gamma`` is 1 in the dense phase and the configured late-phase
    weight afterwards; it scales the integrity term and its gradient. The
    caller chains ``critical_grads`` + ``com_grad`` through the logistic
    derivative to get the logit-space gradient.
    """
    p_next.require_role(ROLE_PROBABILITY)
    p_prev.require_role(ROLE_PROBABILITY)
    topo_f, topo_s, grads, _, _ = _cor_terms(barcode, prior)
    l_cor = float(prior.beta0) - topo_f + topo_s

    n = p_next.nvox
    diff = p_next.data - p_prev.data
    mse = float((diff * diff).sum()) / n
    voxel_term = weights.alpha * mse
    struct_term = 0.0
    degenerate = False
    com_grad = weights.alpha * (2.0 / n) * diff
    if weights.beta > 0.0:
        f_score, f_grad, degenerate = struc_similarity(
            p_next, p_prev, params, next_skeleton, prev_skeleton
        )
        struct_term = -weights.beta * f_score
        com_grad -= weights.beta * f_grad

    l_total = l_cor + phase_gamma * (voxel_term + struct_term)
    return TibLossReport(
        l_cor=l_cor,
        l_com_voxel=voxel_term,
        l_com_struct=struct_term,
        l_total=l_total,
        topo_f=topo_f,
        topo_s=topo_s,
        critical_grads=grads,
        phase_gamma=phase_gamma,
        degenerate_skeleton=degenerate,
        empty_barcode=len(barcode) == 0,
        com_grad=phase_gamma * com_grad,
    )
