"""Finite-difference gradient checking.

The oracle: central differences (f(x+h) - f(x-h)) / 2h in double precision,
compared elementwise against the reverse-mode gradient. Error is reported
as max |ad - fd| / max(|ad| + |fd|, floor); the absolute floor keeps the
ratio meaningful where both gradients are near zero.
"""

import numpy as np

from .tensor import Tensor


def grad_check(fn, points, h: float = 1e-5, floor: float = 1e-3) -> float:
    """Max relative error between reverse-mode and central-difference grads.

    fn takes a list of Tensors (one per entry of `points`) and returns a
    scalar Tensor, rebuilding its graph on every call. Stochastic ops inside
    fn must draw from a freshly seeded rng per call so every evaluation sees
    the same masks. Points are promoted to float64; fn must keep the graph
    in double precision (constants included) for the comparison to be fair.
    """
    if not 1e-6 <= h <= 1e-3:
        raise ValueError(f"grad_check: h must lie in [1e-6, 1e-3], got {h}")
    pts = [np.array(p, dtype=np.float64) for p in points]

    inputs = [Tensor(p.copy(), requires_grad=True) for p in pts]
    out = fn(inputs)
    if out.data.size != 1:
        raise ValueError(f"grad_check: fn must return a scalar, got shape {out.data.shape}")
    if out.data.dtype != np.float64:
        raise ValueError("grad_check: fn produced a non-float64 graph")
    out.backward()
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs
    ]

    def f_at(arrays) -> float:
        return float(fn([Tensor(a.copy()) for a in arrays]).data)

    worst = 0.0
    for i, p in enumerate(pts):
        flat = p.reshape(-1)
        numeric = np.zeros_like(flat)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = f_at(pts)
            flat[j] = orig - h
            fm = f_at(pts)
            flat[j] = orig
            numeric[j] = (fp - fm) / (2.0 * h)
        ad = analytic[i].reshape(-1)
        if flat.size:
            denom = np.maximum(np.abs(ad) + np.abs(numeric), floor)
            worst = max(worst, float(np.max(np.abs(ad - numeric) / denom)))
    return worst
