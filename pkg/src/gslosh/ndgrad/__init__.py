"""Minimal dense-tensor autodiff: tensors, layers, Adam, checkpoints."""

from .checkpoint import CheckpointError, file_digest, load_params, save_params
from .layers import (
    GRU_PARAM_KEYS,
    dense_forward,
    gru_cell_forward,
    gru_cell_init,
    xavier_uniform,
)
from .optim import Adam
from .params import ParameterSet
from .tensor import (
    GradientError,
    ShapeError,
    Tape,
    Tensor,
    add,
    astensor,
    fill_tril,
    gather_last,
    l1_sum,
    matmul,
    matvec,
    mean_all,
    mul,
    relu,
    scale,
    scatter_into,
    sigmoid,
    slice_last,
    square,
    sub,
    sum_all,
    tanh,
    trace,
    transpose_last2,
)

__all__ = [
    "Adam",
    "CheckpointError",
    "GradientError",
    "GRU_PARAM_KEYS",
    "ParameterSet",
    "ShapeError",
    "Tape",
    "Tensor",
    "add",
    "astensor",
    "dense_forward",
    "fill_tril",
    "file_digest",
    "gather_last",
    "gru_cell_forward",
    "gru_cell_init",
    "l1_sum",
    "load_params",
    "matmul",
    "matvec",
    "mean_all",
    "mul",
    "relu",
    "save_params",
    "scale",
    "scatter_into",
    "sigmoid",
    "slice_last",
    "square",
    "sub",
    "sum_all",
    "tanh",
    "trace",
    "transpose_last2",
    "xavier_uniform",
]
