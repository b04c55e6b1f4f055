"""Feature-map augmentation: GridMask, mixup, spectrum masking, composition.

All functions are pure given (input, config, rng) and operate on the
normalized feature maps the training loop feeds the network (masking fills
with 0 = the per-coefficient mean). Draw orders are fixed and documented
per op so seeded runs replay exactly.
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DimensionError
from .features.mfcc import FeatureMap

COMPOSE_ORDERS = (
    "none",
    "gridmask",
    "mixup",
    "specmask",
    "gridmask_then_mixup",
    "mixup_then_gridmask",
)


@dataclass
class GridMaskConfig:
    """Apply probability p, per-tile masked ratio mr, grid period range.

    d_range applies to both axes (frequency rows and time frames); a period
    larger than an axis extent is clamped to it with a warning.
    """

    p: float
    mr: float
    d_range: tuple = (8, 40)

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"gridmask p must lie in [0,1], got {self.p}")
        if not 0.0 < self.mr < 1.0:
            raise ConfigError(f"gridmask mr must lie in (0,1), got {self.mr}")
        lo, hi = self.d_range
        if lo < 2 or hi < lo:
            raise ConfigError(f"gridmask d_range must satisfy 2 <= lo <= hi, got {self.d_range}")


@dataclass
class MixupConfig:
    alpha: float = 0.2

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError(f"mixup alpha must be > 0, got {self.alpha}")


@dataclass
class SpecMaskConfig:
    n_time_masks: int = 2
    max_time_width: int = 40
    n_freq_masks: int = 2
    max_freq_width: int = 8

    def __post_init__(self):
        if min(self.n_time_masks, self.max_time_width, self.n_freq_masks, self.max_freq_width) < 0:
            raise ConfigError("spec-mask counts and widths must be >= 0")


@dataclass
class AugmentPolicy:
    """What compose() should run per batch, and in which order."""

    order: str = "none"
    gridmask: GridMaskConfig | None = None
    mixup: MixupConfig | None = None
    specmask: SpecMaskConfig | None = None

    def __post_init__(self):
        if self.order not in COMPOSE_ORDERS:
            raise ConfigError(f"unknown augmentation order {self.order!r}; valid: {COMPOSE_ORDERS}")


def _draw_period(extent: int, lo: int, hi: int, rng) -> int:
    if hi > extent:
        warnings.warn(
            f"gridmask d_range [{lo},{hi}] exceeds feature extent {extent}; clamping",
            stacklevel=3,
        )
        hi = extent
        lo = min(lo, hi)
    return int(rng.integers(lo, hi + 1))


def grid_mask_pattern(n_freq: int, n_time: int, mr: float, d_range, rng) -> np.ndarray:
    """Draw one boolean mask [n_freq, n_time]; True marks cells to zero.

    Draw order: d1 (freq period), d2 (time period), offset1, offset2. The
    masked edge of each tile is a_i = round(d_i * sqrt(mr)), so a full tile
    masks (a1*a2)/(d1*d2) ~ mr of its cells.
    """
    lo, hi = d_range
    d1 = _draw_period(n_freq, lo, hi, rng)
    d2 = _draw_period(n_time, lo, hi, rng)
    edge = np.sqrt(mr)
    a1 = int(round(d1 * edge))
    a2 = int(round(d2 * edge))
    off1 = int(rng.integers(0, d1))
    off2 = int(rng.integers(0, d2))
    rows = ((np.arange(n_freq) - off1) % d1) < a1
    cols = ((np.arange(n_time) - off2) % d2) < a2
    return rows[:, None] & cols[None, :]


def grid_mask(fm: FeatureMap, cfg: GridMaskConfig, rng) -> FeatureMap:
    """Zero a periodic grid of rectangles with probability cfg.p.

    The apply gate draws first (even at p=0, keeping rng streams aligned
    across configs); a skipped example comes back unchanged.
    """
    if rng.random() >= cfg.p:
        return fm
    mask = grid_mask_pattern(fm.coeffs.shape[0], fm.coeffs.shape[1], cfg.mr, cfg.d_range, rng)
    out = fm.coeffs.copy()
    out[mask] = 0
    return replace(fm, coeffs=out)


def mixup(x1: FeatureMap, y1, x2: FeatureMap, y2, alpha: float, rng, lam: float | None = None):
    """Convex combination of two examples and their label distributions.

    lam overrides the Beta(alpha, alpha) draw when given (tests and the
    degenerate compositions use it). Inputs must share shape; callers crop
    variable-length pairs to the shorter T first.
    """
    if x1.coeffs.shape != x2.coeffs.shape:
        raise DimensionError(f"mixup: feature shapes differ: {x1.coeffs.shape} vs {x2.coeffs.shape}")
    y1 = _check_label_dist(np.asarray(y1, dtype=np.float32), "y1")
    y2 = _check_label_dist(np.asarray(y2, dtype=np.float32), "y2")
    if y1.shape != y2.shape:
        raise DimensionError(f"mixup: label shapes differ: {y1.shape} vs {y2.shape}")
    if lam is None:
        lam = float(rng.beta(alpha, alpha))
    mixed = lam * x1.coeffs + (1.0 - lam) * x2.coeffs
    label = lam * y1 + (1.0 - lam) * y2
    return replace(x1, coeffs=mixed.astype(np.float32)), label


def _check_label_dist(y, name):
    if y.ndim != 1 or np.any(y < 0) or abs(float(y.sum()) - 1.0) > 1e-6:
        raise ConfigError(f"mixup: {name} is not a probability vector (sum {float(y.sum())})")
    return y


def crop_to_common(fms):
    """Crop a list of feature maps to the batch-minimum frame count."""
    t_min = min(fm.coeffs.shape[1] for fm in fms)
    return [replace(fm, coeffs=fm.coeffs[:, :t_min]) for fm in fms]


def spec_mask(fm: FeatureMap, cfg: SpecMaskConfig, rng) -> FeatureMap:
    """Zero random contiguous time spans and frequency bands.

    Per mask: width uniform on [0, max_width], then position uniform over
    valid starts. Time masks draw before frequency masks. Configured max
    widths must fit the map's extents.
    """
    n_freq, n_time = fm.coeffs.shape
    if cfg.max_time_width > n_time:
        raise ConfigError(f"max_time_width {cfg.max_time_width} exceeds {n_time} frames")
    if cfg.max_freq_width > n_freq:
        raise ConfigError(f"max_freq_width {cfg.max_freq_width} exceeds {n_freq} coefficient rows")
    out = fm.coeffs.copy()
    for _ in range(cfg.n_time_masks):
        w = int(rng.integers(0, cfg.max_time_width + 1))
        t0 = int(rng.integers(0, n_time - w + 1))
        out[:, t0 : t0 + w] = 0
    for _ in range(cfg.n_freq_masks):
        w = int(rng.integers(0, cfg.max_freq_width + 1))
        f0 = int(rng.integers(0, n_freq - w + 1))
        out[f0 : f0 + w, :] = 0
    return replace(fm, coeffs=out)


_STAGES = {
    "none": (),
    "gridmask": ("gridmask",),
    "mixup": ("mixup",),
    "specmask": ("specmask",),
    "gridmask_then_mixup": ("gridmask", "mixup"),
    "mixup_then_gridmask": ("mixup", "gridmask"),
}


def compose(order: str, batch, rng, gridmask_cfg: GridMaskConfig | None = None,
            mixup_cfg: MixupConfig | None = None, specmask_cfg: SpecMaskConfig | None = None):
    """Apply an augmentation order to a batch of (FeatureMap, label-dist).

    Stages run over the whole batch in sequence, so gridmask_then_mixup
    masks every example (sources included) before any mixing. The mixup
    stage pairs example i with a seeded permutation partner and draws one
    lambda per output. Examples are processed in batch order.
    """
    if order not in _STAGES:
        raise ConfigError(f"unknown augmentation order {order!r}; valid: {COMPOSE_ORDERS}")
    batch = list(batch)
    stages = _STAGES[order]
    if "mixup" in stages and len(batch) < 2:
        raise ConfigError(f"mixup needs a batch of >= 2 examples, got {len(batch)}")

    for stage in stages:
        if stage == "gridmask":
            if gridmask_cfg is None:
                raise ConfigError(f"order {order!r} needs a gridmask config")
            batch = [(grid_mask(fm, gridmask_cfg, rng), y) for fm, y in batch]
        elif stage == "specmask":
            if specmask_cfg is None:
                raise ConfigError(f"order {order!r} needs a specmask config")
            batch = [(spec_mask(fm, specmask_cfg, rng), y) for fm, y in batch]
        else:
            if mixup_cfg is None:
                raise ConfigError(f"order {order!r} needs a mixup config")
            partners = rng.permutation(len(batch))
            mixed = []
            for i, (fm, y) in enumerate(batch):
                fm2, y2 = batch[int(partners[i])]
                a, b = crop_to_common([fm, fm2])
                mixed.append(mixup(a, y, b, y2, mixup_cfg.alpha, rng))
            batch = mixed
    return batch


def apply_policy(policy: AugmentPolicy, batch, rng):
    return compose(policy.order, batch, rng, gridmask_cfg=policy.gridmask,
                   mixup_cfg=policy.mixup, specmask_cfg=policy.specmask)


def mask_to_pgm(mask: np.ndarray) -> bytes:
    """Binary PGM (P5) bytes for a boolean mask: masked=0 (black), kept=255."""
    h, w = mask.shape
    pixels = np.where(mask, 0, 255).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode() + pixels.tobytes()
