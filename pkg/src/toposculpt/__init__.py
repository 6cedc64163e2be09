"""Betti-steered test-time topological refinement of 3D tubular volumes.

The package computes 0-dimensional cubical persistent homology of
probability volumes, sculpts them by gradient descent under a
component-count prior with voxel and structural integrity terms, and
evaluates geometric/topological quality against ground truth. Synthetic
tubular phantoms with exact centerlines stand in for clinical data.
"""

__version__ = "0.1.0"

from .cubical_ph import (
    Barcode,
    PersistencePair,
    active_backend,
    betti0_at,
    compute_ph0,
    oracle_betti_curve,
)
from .errors import (
    PhantomPlacementError,
    RefinementNumericalError,
    ToposculptError,
    VolumeFormatError,
    VolumeRoleError,
)
from .metrics import (
    CenterlineTruth,
    MetricReport,
    betti0_error,
    cl_dice,
    dice,
    evaluate_case,
    hd95,
    nsdice,
    tree_branch_detected,
)
from .phantom import PhantomCase, PhantomConfig, corrupt, generate_case, generate_tree
from .refine import (
    CurriculumConfig,
    OptimizerConfig,
    RefinementState,
    TrajectoryRecord,
    init_state,
    run,
    schedule_j,
    step,
)
from .soft_skeleton import SkeletonParams, soft_dilate, soft_erode, soft_skel
from .tib_loss import (
    TibLossReport,
    TibWeights,
    TopoPrior,
    l_tib_com,
    l_tib_cor,
    l_tib_total,
    split_features,
    struc_similarity,
)
from .volume import Connectivity, Volume, VoxelCoord, binarize, neighbors, sigmoid

__all__ = [
    "__version__",
    "Barcode",
    "CenterlineTruth",
    "Connectivity",
    "CurriculumConfig",
    "MetricReport",
    "OptimizerConfig",
    "PersistencePair",
    "PhantomCase",
    "PhantomConfig",
    "PhantomPlacementError",
    "RefinementNumericalError",
    "RefinementState",
    "SkeletonParams",
    "TibLossReport",
    "TibWeights",
    "TopoPrior",
    "ToposculptError",
    "TrajectoryRecord",
    "Volume",
    "VolumeFormatError",
    "VolumeRoleError",
    "VoxelCoord",
    "active_backend",
    "betti0_at",
    "betti0_error",
    "binarize",
    "cl_dice",
    "compute_ph0",
    "corrupt",
    "dice",
    "evaluate_case",
    "generate_case",
    "generate_tree",
    "hd95",
    "init_state",
    "l_tib_com",
    "l_tib_cor",
    "l_tib_total",
    "neighbors",
    "nsdice",
    "oracle_betti_curve",
    "run",
    "schedule_j",
    "sigmoid",
    "soft_dilate",
    "soft_erode",
    "soft_skel",
    "split_features",
    "step",
    "struc_similarity",
    "tree_branch_detected",
]
