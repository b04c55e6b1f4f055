from .rng import new_rng
from .tensor import (
    BatchNormState,
    Tensor,
    avg_pool1d,
    batchnorm1d,
    channel_scale,
    conv1d,
    cross_entropy,
    depthwise_conv1d,
    dropout,
    elementwise_add,
    global_average_pool,
    linear,
    max_pool1d,
    relu,
    scalar_mul,
    select,
    softmax,
    stack,
    tensor_sum,
)
from .gradcheck import grad_check
from .serialize import TENSOR_MAGIC, load_tensor, read_tensor, save_tensor, write_tensor

__all__ = [
    "BatchNormState",
    "Tensor",
    "avg_pool1d",
    "batchnorm1d",
    "channel_scale",
    "conv1d",
    "cross_entropy",
    "depthwise_conv1d",
    "dropout",
    "elementwise_add",
    "global_average_pool",
    "grad_check",
    "linear",
    "max_pool1d",
    "new_rng",
    "relu",
    "scalar_mul",
    "select",
    "softmax",
    "stack",
    "tensor_sum",
    "TENSOR_MAGIC",
    "load_tensor",
    "read_tensor",
    "save_tensor",
    "write_tensor",
]
