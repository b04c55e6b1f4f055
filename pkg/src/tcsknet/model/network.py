"""TC-SKNet: temporal convolutions fused by selective-kernel attention.

The 39 MFCC coefficients are the channel axis; every convolution is 1-d
along time. A TC-SKblock runs two branches (kernel 3 and kernel 5, same
padding), each conv -> batchnorm -> relu, then fuses them with learned
per-channel softmax attention:

    U = U1 + U2
    S = GAP(U)
    Z = relu(fc_z(S))
    a_j = softmax over branches of fc_j(Z), per channel
    F = sum_j a_j * U_j

The network: block(39->C) -> maxpool(2,2) -> block(C->C) -> maxpool(2,2)
-> conv1d(C->C, kernel p_size, same padding) -> relu -> GAP -> dropout
-> fc(C -> n_classes). GAP makes the logits length-invariant in T.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DimensionError
from ..features.mfcc import FeatureMap
from ..numerics.tensor import (
    BatchNormState,
    Tensor,
    batchnorm1d,
    channel_scale,
    conv1d,
    depthwise_conv1d,
    dropout,
    elementwise_add,
    global_average_pool,
    linear,
    max_pool1d,
    relu,
    select,
    softmax,
    stack,
)


@dataclass
class TcskNetConfig:
    in_channels: int = 39
    c_channels: int = 60
    l_size: int = 50
    p_size: int = 11
    dropout: float = 0.2
    n_classes: int = 10
    separable: bool = False

    def __post_init__(self):
        if self.in_channels < 1 or self.c_channels < 1 or self.l_size < 1:
            raise ConfigError(
                f"in_channels/c_channels/l_size must be >= 1, got "
                f"{self.in_channels}/{self.c_channels}/{self.l_size}"
            )
        if self.p_size < 1 or self.p_size % 2 == 0:
            raise ConfigError(f"p_size must be odd and >= 1, got {self.p_size}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0,1), got {self.dropout}")
        if self.n_classes < 2:
            raise ConfigError(f"n_classes must be >= 2, got {self.n_classes}")


def _kaiming_uniform(rng, shape, fan_in):
    bound = math.sqrt(6.0 / fan_in)
    if rng is None:
        return np.zeros(shape, dtype=np.float32)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class _Conv:
    """Standard temporal conv weights: [cout, cin, k] + bias."""

    separable = False

    def __init__(self, cin, cout, k, rng):
        self.k = k
        self.weight = Tensor(_kaiming_uniform(rng, (cout, cin, k), cin * k), requires_grad=True)
        self.bias = Tensor(np.zeros(cout, dtype=np.float32), requires_grad=True)

    def named(self, prefix):
        yield f"{prefix}.weight", self.weight
        yield f"{prefix}.bias", self.bias

    def apply(self, x, padding):
        return conv1d(x, self.weight, self.bias, stride=1, padding=padding)


class _SepConv:
    """Depthwise [cin, k] followed by pointwise [cout, cin, 1] + bias."""

    separable = True

    def __init__(self, cin, cout, k, rng):
        self.k = k
        self.depthwise = Tensor(_kaiming_uniform(rng, (cin, k), k), requires_grad=True)
        self.pointwise = Tensor(_kaiming_uniform(rng, (cout, cin, 1), cin), requires_grad=True)
        self.bias = Tensor(np.zeros(cout, dtype=np.float32), requires_grad=True)

    def named(self, prefix):
        yield f"{prefix}.depthwise", self.depthwise
        yield f"{prefix}.pointwise", self.pointwise
        yield f"{prefix}.bias", self.bias

    def apply(self, x, padding):
        h = depthwise_conv1d(x, self.depthwise, stride=1, padding=padding)
        return conv1d(h, self.pointwise, self.bias, stride=1, padding=0)


class _Linear:
    def __init__(self, din, dout, rng):
        self.weight = Tensor(_kaiming_uniform(rng, (dout, din), din), requires_grad=True)
        self.bias = Tensor(np.zeros(dout, dtype=np.float32), requires_grad=True)

    def named(self, prefix):
        yield f"{prefix}.weight", self.weight
        yield f"{prefix}.bias", self.bias


class _BatchNorm:
    def __init__(self, c, momentum=0.1, eps=1e-5):
        self.gamma = Tensor(np.ones(c, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(c, dtype=np.float32), requires_grad=True)
        self.state = BatchNormState(momentum)
        self.eps = eps

    def named(self, prefix):
        yield f"{prefix}.gamma", self.gamma
        yield f"{prefix}.beta", self.beta

    def apply(self, x, mode):
        return batchnorm1d(x, self.gamma, self.beta, self.state, mode, self.eps)


class TcskBlockParams:
    """One TC-SKblock: conv3/conv5 branches with BN, plus the attention FCs."""

    def __init__(self, cin, c1, l_size, rng, separable=False):
        conv_cls = _SepConv if separable else _Conv
        self.conv3 = conv_cls(cin, c1, 3, rng)
        self.conv5 = conv_cls(cin, c1, 5, rng)
        self.bn3 = _BatchNorm(c1)
        self.bn5 = _BatchNorm(c1)
        self.fc_z = _Linear(c1, l_size, rng)
        self.fc_a = _Linear(l_size, c1, rng)
        self.fc_b = _Linear(l_size, c1, rng)

    def named(self, prefix):
        for name, sub in (("conv3", self.conv3), ("conv5", self.conv5),
                          ("bn3", self.bn3), ("bn5", self.bn5),
                          ("fc_z", self.fc_z), ("fc_a", self.fc_a), ("fc_b", self.fc_b)):
            yield from sub.named(f"{prefix}.{name}")


def sk_fuse(branches, fc_z, branch_fcs):
    """Fuse same-shape branch outputs with per-channel softmax attention.

    Written over a list (any number of branches >= 2, one FC per branch);
    the network uses exactly two. Returns sum_j a_j * U_j where the a_j are
    a per-channel softmax over the branch FC outputs, so for every channel
    the attention weights sum to 1 and the fused value is a convex
    combination of the branch values.
    """
    branches = list(branches)
    branch_fcs = list(branch_fcs)
    if len(branches) < 2:
        raise DimensionError(f"sk_fuse needs >= 2 branches, got {len(branches)}")
    if len(branches) != len(branch_fcs):
        raise DimensionError(f"{len(branches)} branches but {len(branch_fcs)} attention FCs")
    shape0 = branches[0].data.shape
    for br in branches[1:]:
        if br.data.shape != shape0:
            raise DimensionError(f"sk_fuse branch shapes differ: {shape0} vs {br.data.shape}")

    u = branches[0]
    for br in branches[1:]:
        u = elementwise_add(u, br)
    s = global_average_pool(u)
    z = relu(linear(s, fc_z.weight, fc_z.bias))
    digits = stack([linear(z, fc.weight, fc.bias) for fc in branch_fcs])
    att = softmax(digits, axis=0)

    fused = channel_scale(branches[0], select(att, 0))
    for j in range(1, len(branches)):
        fused = elementwise_add(fused, channel_scale(branches[j], select(att, j)))
    return fused


def tcsk_block_forward(x, block: TcskBlockParams, mode: str):
    """conv -> bn -> relu on both branches (same padding), then sk_fuse."""
    u1 = relu(block.bn3.apply(block.conv3.apply(x, padding=1), mode))
    u2 = relu(block.bn5.apply(block.conv5.apply(x, padding=2), mode))
    return sk_fuse([u1, u2], block.fc_z, [block.fc_a, block.fc_b])


class TcskNet:
    """The full network; construct with an rng to initialize weights.

    rng=None zero-fills everything (used by checkpoint loading, which
    overwrites all tensors anyway). Weight init is Kaiming-uniform fan-in
    (bound sqrt(6/fan_in)); biases zero; BN gamma 1, beta 0. The draw order
    is the parameters() order, so a seed pins the full initialization.
    """

    def __init__(self, config: TcskNetConfig, rng=None):
        self.config = config
        c, l = config.c_channels, config.l_size
        conv_cls = _SepConv if config.separable else _Conv
        self.block1 = TcskBlockParams(config.in_channels, c, l, rng, config.separable)
        self.block2 = TcskBlockParams(c, c, l, rng, config.separable)
        self.post_conv = conv_cls(c, c, config.p_size, rng)
        self.head = _Linear(c, config.n_classes, rng)

    def named_parameters(self):
        yield from self.block1.named("block1")
        yield from self.block2.named("block2")
        yield from self.post_conv.named("post_conv")
        yield from self.head.named("head")

    def parameters(self) -> dict:
        return dict(self.named_parameters())

    def batchnorms(self):
        yield "block1.bn3", self.block1.bn3
        yield "block1.bn5", self.block1.bn5
        yield "block2.bn3", self.block2.bn3
        yield "block2.bn5", self.block2.bn5

    def zero_grad(self):
        for _, p in self.named_parameters():
            p.grad = None


def min_frames(config: TcskNetConfig) -> int:
    """Smallest T the forward pass accepts (two 2x poolings, then p_size)."""
    return 4 * config.p_size


def tcsknet_forward(fm, net: TcskNet, mode: str, rng=None):
    """Run the network; returns raw logits [n_classes] (or [B, n_classes]).

    fm may be a FeatureMap, a Tensor, or an ndarray shaped [39,T] or
    [B,39,T]. Train mode needs an rng when dropout > 0.
    """
    cfg = net.config
    if isinstance(fm, FeatureMap):
        x = Tensor(fm.coeffs)
    elif isinstance(fm, Tensor):
        x = fm
    else:
        x = Tensor(np.asarray(fm))
    if x.data.ndim not in (2, 3):
        raise DimensionError(f"tcsknet_forward: input must be [C,T] or [B,C,T], got {x.data.shape}")
    c_in, t_in = x.data.shape[-2], x.data.shape[-1]
    if c_in != cfg.in_channels:
        raise DimensionError(f"tcsknet_forward: input has {c_in} channels, config says {cfg.in_channels}")
    if t_in < min_frames(cfg):
        raise DimensionError(
            f"tcsknet_forward: input has {t_in} frames; p_size={cfg.p_size} needs at least {min_frames(cfg)}"
        )

    h = tcsk_block_forward(x, net.block1, mode)
    h = max_pool1d(h, 2, 2)
    h = tcsk_block_forward(h, net.block2, mode)
    h = max_pool1d(h, 2, 2)
    h = relu(net.post_conv.apply(h, padding=(cfg.p_size - 1) // 2))
    h = global_average_pool(h)
    h = dropout(h, cfg.dropout, rng, mode)
    return linear(h, net.head.weight, net.head.bias)


def param_count(config: TcskNetConfig) -> int:
    """Learnable-scalar count from the closed form (not by building a net).

    Standard convolutions, per block with input channels cin:
        conv3 + conv5   : 8*c*cin + 2c      (3c*cin + c) + (5c*cin + c)
        bn3 + bn5       : 4c
        fc_z            : l*c + l
        fc_a + fc_b     : 2*(c*l + c)
        block(cin,c,l)  = 8*c*cin + 8c + 3*c*l + l
    network = block(in,c,l) + block(c,c,l) + post conv (c*c*p + c)
              + head (n*c + n)

    Separable convolutions swap each k-tap conv for depthwise (cin*k) +
    pointwise (c*cin + c):
        block_sep(cin,c,l) = 8*cin + 2*c*cin + 8c + 3*c*l + l
        post conv  -> c*p + c*c + c
    Running BN statistics are state, not parameters, and are excluded.
    """
    cin, c, l, p, n = (config.in_channels, config.c_channels, config.l_size,
                       config.p_size, config.n_classes)
    if config.separable:
        def block(ci):
            return 8 * ci + 2 * c * ci + 8 * c + 3 * c * l + l
        post = c * p + c * c + c
    else:
        def block(ci):
            return 8 * c * ci + 8 * c + 3 * c * l + l
        post = c * c * p + c
    return block(cin) + block(c) + post + (n * c + n)
