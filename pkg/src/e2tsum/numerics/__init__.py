"""Dense float64 tensors with reverse-mode differentiation and optimizers."""
from .autodiff import (
    MASK_VALUE,
    Node,
    add,
    as_node,
    backward,
    concat,
    exp,
    getitem,
    linear,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    no_grad,
    parameter,
    pick,
    reshape,
    sigmoid,
    softmax,
    softmax_array,
    stack,
    sub,
    take_rows,
    tanh,
    transpose,
)
from .autodiff import sum as sum_  # noqa: F401
from .checkpoint import CheckpointError, Parameters, load_tensors, save_tensors
from .optim import AdadeltaState, adadelta_step, dropout, glorot_uniform, maxnorm_constraint
