"""Dense tensors with reverse-mode autodiff for the ops the network needs.

The op surface is deliberately small: 1-d convolution (plus a depthwise
variant for the separable switch), batchnorm, relu, softmax, pooling,
linear, dropout, elementwise add, scalar/per-channel scaling, stack/select
for branch attention, and cross-entropy. There is no general broadcasting;
each op states the ranks it accepts. Most ops take either the single-map
shapes ([C,T], [d]) or the same with a leading batch axis ([B,C,T], [B,d]).

Graphs are built eagerly: each op records its parent tensors, so insertion
order is already topological. backward() walks the nodes once, in reverse
topological order, accumulating into .grad.

dtype policy: float32 by default, float64 when finite-difference gradient
checks need the headroom. An op's output dtype follows its inputs.
"""

import numpy as np

from ..errors import DimensionError

__all__ = [
    "Tensor",
    "BatchNormState",
    "conv1d",
    "depthwise_conv1d",
    "batchnorm1d",
    "relu",
    "softmax",
    "global_average_pool",
    "linear",
    "avg_pool1d",
    "max_pool1d",
    "dropout",
    "elementwise_add",
    "scalar_mul",
    "channel_scale",
    "stack",
    "select",
    "tensor_sum",
    "cross_entropy",
]

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """N-d float array with an optional gradient of the same shape.

    Leaves are created directly (requires_grad=True for parameters); every
    op returns a new Tensor wired to its parents. Tensors are treated as
    immutable once an op has produced them; only the optimizer mutates
    parameter .data in place, between graphs.
    """

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = None        # op kind for non-leaves
        self.parents = ()     # upstream tensors; graph insertion order is topological
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        tag = self.op or ("param" if self.requires_grad else "leaf")
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, {tag})"

    def backward(self):
        """Run reverse-mode accumulation from this (scalar) tensor."""
        if self.data.size != 1:
            raise DimensionError(f"backward needs a scalar root, got shape {self.data.shape}")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()


def _toposort(root):
    # iterative post-order: parents always precede their consumers
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _make(data, parents, op):
    out = Tensor(data)
    out.parents = tuple(parents)
    out.op = op
    out.requires_grad = any(p.requires_grad for p in out.parents)
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _windows(x, k, stride):
    # sliding windows over the last axis: [..., T] -> [..., T_out, k]
    win = np.lib.stride_tricks.sliding_window_view(x, k, axis=x.ndim - 1)
    if stride > 1:
        win = win[..., ::stride, :]
    return win


def _scatter_windows(shape, dwin, k, stride):
    # adjoint of _windows: accumulate window grads back onto the source axis
    out = np.zeros(shape, dtype=dwin.dtype)
    t_out = dwin.shape[-2]
    for j in range(k):
        out[..., j : j + stride * (t_out - 1) + 1 : stride] += dwin[..., j]
    return out


def _as_batched(t, rank, name):
    # normalize [C,T]-style input to [B,C,T]; returns (array, was_batched)
    if t.data.ndim == rank:
        return t.data[None], False
    if t.data.ndim == rank + 1:
        return t.data, True
    raise DimensionError(f"{name}: expected rank {rank} or {rank + 1}, got shape {t.data.shape}")


def conv1d(x, weight, bias=None, stride: int = 1, padding: int = 0):
    """1-d convolution along time. x: [Cin,T] or [B,Cin,T]; weight: [Cout,Cin,K].

    T' = floor((T + 2*padding - K)/stride) + 1. Same-padding for odd K is
    padding=(K-1)//2 with stride 1.
    """
    if stride < 1:
        raise ValueError(f"conv1d: stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"conv1d: padding must be >= 0, got {padding}")
    if weight.data.ndim != 3:
        raise DimensionError(f"conv1d: weight must be [Cout,Cin,K], got shape {weight.data.shape}")
    xd, batched = _as_batched(x, 2, "conv1d")
    b_sz, cin, t_in = xd.shape
    cout, w_cin, k = weight.data.shape
    if w_cin != cin:
        raise DimensionError(f"conv1d: input has {cin} channels but weight expects {w_cin}")
    if bias is not None and bias.data.shape != (cout,):
        raise DimensionError(f"conv1d: bias shape {bias.data.shape} != ({cout},)")
    if k > t_in + 2 * padding:
        raise DimensionError(f"conv1d: kernel {k} exceeds padded length {t_in + 2 * padding}")

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding))) if padding else xd
    win = _windows(xp, k, stride)                                   # [B,Cin,T',K]
    t_out = win.shape[2]
    patches = win.transpose(0, 2, 1, 3).reshape(b_sz, t_out, cin * k)
    wmat = weight.data.reshape(cout, cin * k)
    y = patches @ wmat.T                                            # [B,T',Cout]
    if bias is not None:
        y = y + bias.data
    y = np.ascontiguousarray(y.transpose(0, 2, 1))                  # [B,Cout,T']

    parents = (x, weight) if bias is None else (x, weight, bias)
    out = _make(y if batched else y[0], parents, "conv1d")

    def _bw():
        gy = out.grad if batched else out.grad[None]
        g2 = gy.transpose(0, 2, 1).reshape(b_sz * t_out, cout)
        if weight.requires_grad:
            p2 = patches.reshape(b_sz * t_out, cin * k)
            _accum(weight, (g2.T @ p2).reshape(cout, cin, k))
        if bias is not None and bias.requires_grad:
            _accum(bias, g2.sum(axis=0))
        if x.requires_grad:
            dwin = (g2 @ wmat).reshape(b_sz, t_out, cin, k).transpose(0, 2, 1, 3)
            dxp = _scatter_windows(xp.shape, dwin, k, stride)
            dx = dxp[:, :, padding : padding + t_in]
            _accum(x, dx if batched else dx[0])

    if out.requires_grad:
        out._backward = _bw
    return out


def depthwise_conv1d(x, weight, stride: int = 1, padding: int = 0):
    """Per-channel 1-d convolution (no cross-channel mixing, no bias).

    x: [C,T] or [B,C,T]; weight: [C,K]. Used with a 1x pointwise conv1d to
    form the depthwise-separable temporal convolution variant.
    """
    if stride < 1:
        raise ValueError(f"depthwise_conv1d: stride must be >= 1, got {stride}")
    if weight.data.ndim != 2:
        raise DimensionError(f"depthwise_conv1d: weight must be [C,K], got shape {weight.data.shape}")
    xd, batched = _as_batched(x, 2, "depthwise_conv1d")
    _, cin, t_in = xd.shape
    w_c, k = weight.data.shape
    if w_c != cin:
        raise DimensionError(f"depthwise_conv1d: input has {cin} channels but weight expects {w_c}")
    if k > t_in + 2 * padding:
        raise DimensionError(f"depthwise_conv1d: kernel {k} exceeds padded length {t_in + 2 * padding}")

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding))) if padding else xd
    win = _windows(xp, k, stride)                                   # [B,C,T',K]
    y = np.einsum("bctk,ck->bct", win, weight.data)

    out = _make(y if batched else y[0], (x, weight), "depthwise_conv1d")

    def _bw():
        gy = out.grad if batched else out.grad[None]
        if weight.requires_grad:
            _accum(weight, np.einsum("bct,bctk->ck", gy, win))
        if x.requires_grad:
            dwin = gy[..., None] * weight.data[None, :, None, :]
            dxp = _scatter_windows(xp.shape, dwin, k, stride)
            dx = dxp[:, :, padding : padding + t_in]
            _accum(x, dx if batched else dx[0])

    if out.requires_grad:
        out._backward = _bw
    return out


class BatchNormState:
    """Running mean/variance for one batchnorm layer (state, not learnable).

    Stats are None until the first train-mode pass; that pass adopts the
    batch statistics, later passes blend with momentum. Population (biased)
    variance throughout.
    """

    def __init__(self, momentum: float = 0.1):
        self.momentum = float(momentum)
        self.running_mean = None
        self.running_var = None

    @property
    def initialized(self) -> bool:
        return self.running_mean is not None


def batchnorm1d(x, gamma, beta, state: BatchNormState, mode: str, eps: float = 1e-5):
    """Per-channel normalization over time (and batch, when batched).

    x: [C,T] or [B,C,T]; gamma/beta: [C]. Train mode normalizes with the
    batch statistics and updates `state`; eval mode uses the running stats
    and raises UninitializedStatisticsError if none exist yet.
    """
    from ..errors import UninitializedStatisticsError

    _check_mode(mode)
    xd, batched = _as_batched(x, 2, "batchnorm1d")
    c = xd.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise DimensionError(
            f"batchnorm1d: input has {c} channels, gamma {gamma.data.shape}, beta {beta.data.shape}"
        )
    red = (0, 2)  # statistics over batch and time, per channel
    n_red = xd.shape[0] * xd.shape[2]

    if mode == "train":
        mean = xd.mean(axis=red)
        var = xd.var(axis=red)
        m = state.momentum
        if state.running_mean is None:
            state.running_mean = mean.copy()
            state.running_var = var.copy()
        else:
            state.running_mean = (1.0 - m) * state.running_mean + m * mean
            state.running_var = (1.0 - m) * state.running_var + m * var
    else:
        if state.running_mean is None:
            raise UninitializedStatisticsError(
                "batchnorm1d: eval mode requested before any train-mode pass set running statistics"
            )
        mean = state.running_mean
        var = state.running_var

    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mean[None, :, None]) * inv[None, :, None]
    y = gamma.data[None, :, None] * xhat + beta.data[None, :, None]

    out = _make(y if batched else y[0], (x, gamma, beta), "batchnorm1d")

    def _bw():
        gy = out.grad if batched else out.grad[None]
        if gamma.requires_grad:
            _accum(gamma, (gy * xhat).sum(axis=red))
        if beta.requires_grad:
            _accum(beta, gy.sum(axis=red))
        if x.requires_grad:
            g = gamma.data[None, :, None]
            if mode == "train":
                dxhat = gy * g
                s1 = dxhat.sum(axis=red, keepdims=True)
                s2 = (dxhat * xhat).sum(axis=red, keepdims=True)
                dx = (inv[None, :, None] / n_red) * (n_red * dxhat - s1 - xhat * s2)
            else:
                dx = gy * g * inv[None, :, None]
            _accum(x, dx if batched else dx[0])

    if out.requires_grad:
        out._backward = _bw
    return out


def relu(x):
    out = _make(np.maximum(x.data, 0), (x,), "relu")

    def _bw():
        _accum(x, out.grad * (x.data > 0))

    if out.requires_grad:
        out._backward = _bw
    return out


def softmax(x, axis: int = -1):
    """Softmax along one axis; entries in (0,1), summing to 1 along the axis."""
    if x.data.shape[axis] == 0:
        raise DimensionError(f"softmax: empty axis {axis} in shape {x.data.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _make(y, (x,), "softmax")

    def _bw():
        gy = out.grad
        dot = (gy * y).sum(axis=axis, keepdims=True)
        _accum(x, y * (gy - dot))

    if out.requires_grad:
        out._backward = _bw
    return out


def global_average_pool(x):
    """Mean over the time axis: [C,T] -> [C] or [B,C,T] -> [B,C]."""
    xd, batched = _as_batched(x, 2, "global_average_pool")
    t_in = xd.shape[2]
    y = xd.mean(axis=2)
    out = _make(y if batched else y[0], (x,), "global_average_pool")

    def _bw():
        gy = out.grad if batched else out.grad[None]
        dx = np.repeat(gy[:, :, None], t_in, axis=2) / t_in
        _accum(x, dx if batched else dx[0])

    if out.requires_grad:
        out._backward = _bw
    return out


def linear(x, weight, bias=None):
    """Affine map: x [din] or [B,din], weight [dout,din], bias [dout]."""
    if weight.data.ndim != 2:
        raise DimensionError(f"linear: weight must be [dout,din], got shape {weight.data.shape}")
    xd, batched = _as_batched(x, 1, "linear")
    dout, din = weight.data.shape
    if xd.shape[1] != din:
        raise DimensionError(f"linear: input has {xd.shape[1]} features but weight expects {din}")
    if bias is not None and bias.data.shape != (dout,):
        raise DimensionError(f"linear: bias shape {bias.data.shape} != ({dout},)")
    y = xd @ weight.data.T
    if bias is not None:
        y = y + bias.data

    parents = (x, weight) if bias is None else (x, weight, bias)
    out = _make(y if batched else y[0], parents, "linear")

    def _bw():
        gy = out.grad if batched else out.grad[None]
        if weight.requires_grad:
            _accum(weight, gy.T @ xd)
        if bias is not None and bias.requires_grad:
            _accum(bias, gy.sum(axis=0))
        if x.requires_grad:
            dx = gy @ weight.data
            _accum(x, dx if batched else dx[0])

    if out.requires_grad:
        out._backward = _bw
    return out


def _pool_pre(x, kernel, stride, name):
    if kernel < 1 or stride < 1:
        raise ValueError(f"{name}: kernel and stride must be >= 1")
    xd, batched = _as_batched(x, 2, name)
    if kernel > xd.shape[2]:
        raise DimensionError(f"{name}: kernel {kernel} exceeds length {xd.shape[2]}")
    return xd, batched


def avg_pool1d(x, kernel: int = 2, stride: int = 2):
    xd, batched = _pool_pre(x, kernel, stride, "avg_pool1d")
    win = _windows(xd, kernel, stride)
    y = win.mean(axis=-1)
    out = _make(y if batched else y[0], (x,), "avg_pool1d")

    def _bw():
        gy = out.grad if batched else out.grad[None]
        dwin = np.repeat(gy[..., None], kernel, axis=-1) / kernel
        dx = _scatter_windows(xd.shape, dwin, kernel, stride)
        _accum(x, dx if batched else dx[0])

    if out.requires_grad:
        out._backward = _bw
    return out


def max_pool1d(x, kernel: int = 2, stride: int = 2):
    """Max over sliding windows; ties route gradient to the first max."""
    xd, batched = _pool_pre(x, kernel, stride, "max_pool1d")
    win = _windows(xd, kernel, stride)
    idx = win.argmax(axis=-1)
    y = win.max(axis=-1)
    out = _make(y if batched else y[0], (x,), "max_pool1d")

    def _bw():
        gy = out.grad if batched else out.grad[None]
        t_out = gy.shape[-1]
        rows = gy.reshape(-1, t_out)
        pos = idx.reshape(-1, t_out) + stride * np.arange(t_out)[None, :]
        dflat = np.zeros((rows.shape[0], xd.shape[2]), dtype=gy.dtype)
        np.add.at(dflat, (np.arange(rows.shape[0])[:, None], pos), rows)
        dx = dflat.reshape(xd.shape)
        _accum(x, dx if batched else dx[0])

    if out.requires_grad:
        out._backward = _bw
    return out


def dropout(x, p: float, rng, mode: str):
    """Zero elements with probability p (train), rescale survivors by 1/(1-p).

    Eval mode is a bitwise identity. Requires an rng in train mode whenever
    p > 0; p == 0 draws nothing, keeping the stream untouched.
    """
    _check_mode(mode)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: p must lie in [0,1), got {p}")
    if mode == "eval" or p == 0.0:
        out = _make(x.data, (x,), "dropout")

        def _bw_id():
            _accum(x, out.grad)

        if out.requires_grad:
            out._backward = _bw_id
        return out

    if rng is None:
        raise ValueError("dropout: train mode with p > 0 needs an rng")
    scale = 1.0 / (1.0 - p)
    mask = (rng.random(x.data.shape) >= p).astype(x.data.dtype) * scale
    out = _make(x.data * mask, (x,), "dropout")

    def _bw():
        _accum(x, out.grad * mask)

    if out.requires_grad:
        out._backward = _bw
    return out


def elementwise_add(a, b):
    if a.data.shape != b.data.shape:
        raise DimensionError(f"elementwise_add: shapes {a.data.shape} and {b.data.shape} differ")
    out = _make(a.data + b.data, (a, b), "elementwise_add")

    def _bw():
        _accum(a, out.grad)
        _accum(b, out.grad)

    if out.requires_grad:
        out._backward = _bw
    return out


def scalar_mul(x, s: float):
    s = float(s)
    out = _make(x.data * s, (x,), "scalar_mul")

    def _bw():
        _accum(x, out.grad * s)

    if out.requires_grad:
        out._backward = _bw
    return out


def channel_scale(u, a):
    """Scale each channel row of u by a scalar: F[i,:] = a[i] * u[i,:].

    u: [C,T] with a: [C], or batched u: [B,C,T] with a: [B,C].
    """
    ud = u.data
    ad = a.data
    if ud.ndim == 2 and ad.shape == (ud.shape[0],):
        y = ud * ad[:, None]
    elif ud.ndim == 3 and ad.shape == ud.shape[:2]:
        y = ud * ad[:, :, None]
    else:
        raise DimensionError(f"channel_scale: u {ud.shape} incompatible with a {ad.shape}")
    out = _make(y, (u, a), "channel_scale")

    def _bw():
        gy = out.grad
        if u.requires_grad:
            _accum(u, gy * (ad[:, None] if ud.ndim == 2 else ad[:, :, None]))
        if a.requires_grad:
            _accum(a, (gy * ud).sum(axis=-1))

    if out.requires_grad:
        out._backward = _bw
    return out


def stack(tensors):
    """Stack same-shape tensors along a new leading axis."""
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("stack: empty input")
    shape0 = tensors[0].data.shape
    for t in tensors[1:]:
        if t.data.shape != shape0:
            raise DimensionError(f"stack: shapes {shape0} and {t.data.shape} differ")
    out = _make(np.stack([t.data for t in tensors]), tuple(tensors), "stack")

    def _bw():
        for j, t in enumerate(tensors):
            _accum(t, out.grad[j])

    if out.requires_grad:
        out._backward = _bw
    return out


def select(x, index: int):
    """Take one slice along the leading axis (the inverse of stack)."""
    if not 0 <= index < x.data.shape[0]:
        raise DimensionError(f"select: index {index} out of range for extent {x.data.shape[0]}")
    out = _make(x.data[index], (x,), "select")

    def _bw():
        g = np.zeros_like(x.data)
        g[index] = out.grad
        _accum(x, g)

    if out.requires_grad:
        out._backward = _bw
    return out


def tensor_sum(x):
    """Sum all elements to a scalar (the usual grad-check root)."""
    out = _make(np.asarray(x.data.sum(), dtype=x.data.dtype), (x,), "tensor_sum")

    def _bw():
        _accum(x, np.full_like(x.data, out.grad))

    if out.requires_grad:
        out._backward = _bw
    return out


def cross_entropy(logits, target):
    """Soft-target cross-entropy: -sum(target * log softmax(logits)).

    logits: [C] or [B,C]; target matches and must be a probability vector
    per row (entries >= 0, summing to 1 within 1e-6). Batched input returns
    the mean over rows, and the gradient w.r.t. logits is
    (softmax(logits) - target) / B.
    """
    tgt = target.data if isinstance(target, Tensor) else np.asarray(target)
    xd, batched = _as_batched(logits, 1, "cross_entropy")
    if tgt.shape != logits.data.shape:
        raise DimensionError(f"cross_entropy: target {tgt.shape} != logits {logits.data.shape}")
    t2 = tgt if batched else tgt[None]
    if np.any(t2 < 0):
        raise ValueError("cross_entropy: target has negative entries")
    sums = t2.sum(axis=1)
    bad = np.abs(sums - 1.0) > 1e-6
    if np.any(bad):
        raise ValueError(f"cross_entropy: target sums to {float(sums[bad][0])}, expected 1")

    b_sz = xd.shape[0]
    z = xd - xd.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    loss = -(t2 * logp).sum() / b_sz
    out = _make(np.asarray(loss, dtype=xd.dtype), (logits,), "cross_entropy")

    def _bw():
        if logits.requires_grad:
            sm = np.exp(logp)
            dx = (sm - t2) * (out.grad / b_sz)
            _accum(logits, dx if batched else dx[0])

    if out.requires_grad:
        out._backward = _bw
    return out


def _check_mode(mode: str):
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
