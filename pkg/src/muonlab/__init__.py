"""muonlab: orthogonalized-momentum optimizers (Muon, Muon+, NorMuon) with a
small numpy training lab for comparing them."""
from ._accel import backend
from .errors import ConfigError, DataError, DegenerateInputError, MuonLabError, NumericalError, ShapeError
from .norm import ALL_DIRECTIONS, NormDirection, apply_norm, norm_col, norm_row
from .optim import (
    OPTIMIZER_KINDS,
    OptimizerConfig,
    ParamGroup,
    ParamState,
    adamw_step,
    muon_plus_step,
    muon_step,
    normuon_step,
    partition_params,
    sgd_momentum_step,
    step_function,
)
from .polar import PolarMethod, coefficient_schedule, exact_polar, newton_schulz, ortho, svd_small
from .tensorcore import Rng

__version__ = "0.1.0"

__all__ = [
    "ALL_DIRECTIONS", "ConfigError", "DataError", "DegenerateInputError", "MuonLabError", "NormDirection",
    "NumericalError", "OPTIMIZER_KINDS", "OptimizerConfig", "ParamGroup", "ParamState", "PolarMethod", "Rng",
    "ShapeError", "adamw_step", "apply_norm", "backend", "coefficient_schedule", "exact_polar", "muon_plus_step",
    "muon_step", "newton_schulz", "norm_col", "norm_row", "normuon_step", "ortho", "partition_params",
    "sgd_momentum_step", "step_function", "svd_small",
]
