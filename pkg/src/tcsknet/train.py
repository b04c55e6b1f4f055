"""Training loop: Adam with weight decay, stepped LR schedule, evaluation.

Determinism contract: every stochastic stream is keyed on (seed, epoch,
purpose), so two runs with the same seed, config, and data produce
bitwise-identical weights and reports. The per-epoch `seconds` column is
the one intentionally non-reproducible field.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .augment import AugmentPolicy, apply_policy, crop_to_common
from .errors import ConfigError, OptimizerError, TrainingAborted
from .model.checkpoint import save_checkpoint
from .model.network import TcskNet, tcsknet_forward
from .numerics.rng import new_rng
from .numerics.tensor import Tensor, cross_entropy


@dataclass
class TrainConfig:
    lr0: float = 0.001
    weight_decay: float = 0.0005
    decay_factor: float = 0.98
    decay_interval: int = 5
    batch_size: int = 16
    epochs: int = 100
    seed: int = 0
    decoupled_decay: bool = True

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be > 0, got {self.lr0}")
        if not 0 < self.decay_factor <= 1:
            raise ConfigError(f"decay_factor must lie in (0,1], got {self.decay_factor}")
        if self.decay_interval < 1:
            raise ConfigError(f"decay_interval must be >= 1, got {self.decay_interval}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Stepped decay: lr0 * factor^(epoch // interval)."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    return cfg.lr0 * cfg.decay_factor ** (epoch // cfg.decay_interval)


class AdamState:
    """First/second moments per parameter plus the shared step counter."""

    def __init__(self, params: dict, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}


def adam_step(params: dict, state: AdamState, lr: float, weight_decay: float,
              decoupled: bool = True) -> int:
    """Update every parameter in place; returns the scalar count touched.

    decoupled=True shrinks weights directly by lr*wd (the default);
    decoupled=False folds wd*p into the gradient before the moment update.
    A parameter with no recorded gradient counts as zero gradient (weight
    decay still applies).
    """
    if lr <= 0:
        raise OptimizerError(f"lr must be > 0, got {lr}")
    for name, p in params.items():
        g = p.grad
        if g is not None and np.isnan(g).any():
            raise OptimizerError(f"NaN gradient in parameter {name!r}; step aborted")

    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    touched = 0
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not decoupled and weight_decay:
            g = g + weight_decay * p.data
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        if decoupled and weight_decay:
            p.data -= lr * weight_decay * p.data
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        touched += p.data.size
    return touched


@dataclass
class EpochRow:
    epoch: int
    lr: float
    train_loss: float
    val_acc: float
    seconds: float


@dataclass
class TrainReport:
    rows: list = field(default_factory=list)
    best_epoch: int = -1
    best_acc: float = -1.0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "lr", "train_loss", "val_acc", "seconds"])
            for r in self.rows:
                w.writerow([r.epoch, f"{r.lr:.10g}", f"{r.train_loss:.6f}",
                            f"{r.val_acc:.6f}", f"{r.seconds:.3f}"])


def _one_hot(label: int, n_classes: int) -> np.ndarray:
    y = np.zeros(n_classes, dtype=np.float32)
    y[label] = 1.0
    return y


def _batch_tensor(pairs):
    fms = crop_to_common([fm for fm, _ in pairs])
    x = np.stack([fm.coeffs for fm in fms]).astype(np.float32)
    y = np.stack([y for _, y in pairs]).astype(np.float32)
    return Tensor(x), Tensor(y)


def train(net: TcskNet, train_set, val_set, cfg: TrainConfig,
          policy: AugmentPolicy | None = None, normalizer=None,
          checkpoint_path=None, report_path=None, extra=None) -> TrainReport:
    """Optimize net on train_set, tracking accuracy on val_set each epoch.

    train_set / val_set are sequences of (FeatureMap, label_index). Each
    epoch: seeded shuffle, per-batch augmentation, forward/backward, one
    adam step per batch at lr_at(epoch); then a full eval pass. The best
    validation accuracy (ties keep the earlier epoch) decides which weights
    land in checkpoint_path. Raises TrainingAborted with epoch/batch
    coordinates if the loss ever goes non-finite.
    """
    if not train_set or not val_set:
        raise ConfigError("train and validation splits must be nonempty")
    n_classes = net.config.n_classes
    for fm, label in list(train_set) + list(val_set):
        if not 0 <= label < n_classes:
            raise ConfigError(f"label {label} outside [0, {n_classes})")
    if policy is None:
        policy = AugmentPolicy()

    params = net.parameters()
    state = AdamState(params)
    report = TrainReport()

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        lr = lr_at(epoch, cfg)
        shuffle_rng = new_rng(cfg.seed, epoch, 0)
        aug_rng = new_rng(cfg.seed, epoch, 1)
        drop_rng = new_rng(cfg.seed, epoch, 2)
        order = shuffle_rng.permutation(len(train_set))

        losses = []
        for b0 in range(0, len(order), cfg.batch_size):
            idx = order[b0 : b0 + cfg.batch_size]
            batch = [(train_set[i][0], _one_hot(train_set[i][1], n_classes)) for i in idx]
            batch = apply_policy(policy, batch, aug_rng)
            x, y = _batch_tensor(batch)
            logits = tcsknet_forward(x, net, mode="train", rng=drop_rng)
            loss = cross_entropy(logits, y)
            loss_val = float(loss.data)
            if not np.isfinite(loss_val):
                raise TrainingAborted(
                    f"non-finite loss {loss_val} at epoch {epoch}, batch {b0 // cfg.batch_size}"
                )
            net.zero_grad()
            loss.backward()
            adam_step(params, state, lr, cfg.weight_decay, cfg.decoupled_decay)
            losses.append(loss_val)

        acc, _ = evaluate(net, val_set)
        row = EpochRow(epoch, lr, float(np.mean(losses)), acc, time.perf_counter() - t0)
        report.rows.append(row)
        if acc > report.best_acc:
            report.best_acc = acc
            report.best_epoch = epoch
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, net, normalizer=normalizer, extra=extra)
    if report_path is not None:
        report.write_csv(report_path)
    return report


def evaluate(net: TcskNet, examples):
    """Accuracy plus the [n_classes, n_classes] confusion matrix.

    Eval mode throughout: no dropout, running BN statistics, no
    augmentation. Clips run one at a time at full length; row = true
    class, column = argmax prediction (ties take the lowest index).
    """
    if not len(examples):
        raise ConfigError("evaluate: empty split")
    n = net.config.n_classes
    confusion = np.zeros((n, n), dtype=np.int64)
    for fm, label in examples:
        logits = tcsknet_forward(fm, net, mode="eval")
        pred = int(np.argmax(logits.data))
        confusion[label, pred] += 1
    acc = float(np.trace(confusion) / confusion.sum())
    return acc, confusion
