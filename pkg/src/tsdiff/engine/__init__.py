from .backend import BACKEND, kernels
from .tensor import (
    EngineError, Tensor, add, backward, clip_grad_norm, concat, conv1d,
    dense, forward_primitive, group_norm, gru_cell, matmul, mean_, mse, mul,
    nearest_upsample1d, no_grad, reshape, scale, sigmoid, silu, slice_,
    sum_, tanh,
)
from .optim import AdamState, EmaState, adam_step, ema_copy_to, ema_update, restore
