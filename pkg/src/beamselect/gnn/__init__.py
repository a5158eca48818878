"""Graph neural network node classifier."""

from .bounds import BoundInputs, bound_constants, gap_terms, generalization_gap
from .features import V_A, V_E, V_U, GraphSample, extract_features
from .model import (
    B_Z,
    DEFAULT_E,
    GnnParams,
    backward,
    forward,
    forward_batch,
    init_params,
    load_checkpoint,
    loss_and_grad,
    param_count,
    project_spectral,
    save_checkpoint,
    zero_params,
)

__all__ = [
    "B_Z",
    "DEFAULT_E",
    "BoundInputs",
    "GnnParams",
    "GraphSample",
    "V_A",
    "V_E",
    "V_U",
    "backward",
    "bound_constants",
    "extract_features",
    "forward",
    "forward_batch",
    "gap_terms",
    "generalization_gap",
    "init_params",
    "load_checkpoint",
    "loss_and_grad",
    "param_count",
    "project_spectral",
    "save_checkpoint",
    "zero_params",
]
