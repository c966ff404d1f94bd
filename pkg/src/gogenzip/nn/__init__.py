"""Small dense-tensor autodiff engine with the layers the models need."""

from .autograd import ComputationRecord, backward
from .checkpoint import dumps_params, load_params, loads_params, save_params
from .gradcheck import gradcheck
from .layers import MLP, Embedding, Linear
from .optim import Adam
from .params import ParamSet, glorot_uniform
from .tensor import (
    Tensor,
    activation,
    clamp,
    concat,
    dropout,
    elu,
    exp,
    gelu,
    linear,
    log,
    matmul,
    reshape,
    softmax,
    square,
    stop_gradient,
    straight_through,
    take_rows,
    tmax,
    tmean,
    tsum,
)

__all__ = [
    "Adam", "ComputationRecord", "Embedding", "Linear", "MLP", "ParamSet", "Tensor",
    "activation", "backward", "clamp", "concat", "dropout", "dumps_params", "elu", "exp",
    "gelu", "glorot_uniform", "gradcheck", "linear", "load_params", "loads_params", "log",
    "matmul", "reshape", "save_params", "softmax", "square", "stop_gradient",
    "straight_through", "take_rows", "tmax", "tmean", "tsum",
]
