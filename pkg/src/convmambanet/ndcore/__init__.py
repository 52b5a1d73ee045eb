"""Minimal dense tensor, reverse-mode tape, seeded RNG, and gradient oracle."""

from .gradcheck import check_grad, finite_diff_grad, max_rel_err, tape_grad
from .ops import (
    BN_EPS,
    BatchNormState,
    DataError,
    DegenerateInputError,
    ParameterError,
    add,
    batchnorm1d,
    conv1d,
    depthwise_conv1d,
    dropout,
    exp,
    index_axis,
    linear,
    matmul,
    maxpool1d,
    mul,
    reduce_mean,
    reduce_sum,
    reshape,
    sigmoid,
    silu,
    slice_axis,
    softmax,
    softmax_cross_entropy,
    softplus,
    stack,
    sub,
    transpose,
)
from .rng import Rng
from .tensor import (
    ContractError,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    active_tape,
    backward,
    row_major_coords,
    row_major_index,
)

__all__ = [
    "BN_EPS",
    "BatchNormState",
    "ContractError",
    "DataError",
    "DegenerateInputError",
    "ParameterError",
    "Rng",
    "ShapeError",
    "Tape",
    "TapeError",
    "Tensor",
    "active_tape",
    "add",
    "backward",
    "batchnorm1d",
    "check_grad",
    "conv1d",
    "depthwise_conv1d",
    "dropout",
    "exp",
    "finite_diff_grad",
    "index_axis",
    "linear",
    "matmul",
    "max_rel_err",
    "maxpool1d",
    "mul",
    "reduce_mean",
    "reduce_sum",
    "reshape",
    "row_major_coords",
    "row_major_index",
    "sigmoid",
    "silu",
    "slice_axis",
    "softmax",
    "softmax_cross_entropy",
    "softplus",
    "stack",
    "sub",
    "tape_grad",
    "transpose",
]
