"""Network definition, gradient-reversal layer, snapshots, and freezing."""

from hartransfer.model.network import (
    DannHead,
    DannHeadSpec,
    DeepConvLstm,
    DimensionError,
    GroupMismatchError,
    ModelSpec,
    ParameterSnapshot,
    grl_backward,
    grl_forward,
    group_of,
    init_head_params,
    init_params,
)

__all__ = [
    "DannHead",
    "DannHeadSpec",
    "DeepConvLstm",
    "DimensionError",
    "GroupMismatchError",
    "ModelSpec",
    "ParameterSnapshot",
    "grl_backward",
    "grl_forward",
    "group_of",
    "init_head_params",
    "init_params",
]
