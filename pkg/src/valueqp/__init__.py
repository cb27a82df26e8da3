"""Value-function learning for one-step QP locomotion control.

Pipeline: box-constrained iLQR on a centroidal quadruped model
generates value-function expansions; a small fully-connected network
learns the reduced gradient/Hessian; at runtime a dense one-step QP
with friction-pyramid and force-bound constraints produces contact
forces at the control rate.
"""

from .centroidal import (
    CentroidalState,
    ContactForces,
    ModelParams,
    VelocityLinearization,
    full_jacobians,
    linearize_velocity,
    step,
)
from .config import Config, load_config
from .features import FEATURE_DIM, TARGET_DIM, TargetVector, featurize, reduce_expansion
from .ilqr import IlqrOptions, OcProblem, SolveResult, ValueExpansion

__all__ = [
    "CentroidalState",
    "ContactForces",
    "ModelParams",
    "VelocityLinearization",
    "step",
    "linearize_velocity",
    "full_jacobians",
    "Config",
    "load_config",
    "FEATURE_DIM",
    "TARGET_DIM",
    "TargetVector",
    "featurize",
    "reduce_expansion",
    "OcProblem",
    "IlqrOptions",
    "SolveResult",
    "ValueExpansion",
]

__version__ = "0.1.0"
