"""Command-line front end.

Subcommands cover the whole pipeline: corpus generation, feature
extraction, training, evaluation, the two-stage hyperparameter search,
mask previews, and parameter accounting. Settings come from a flat TOML
config file; command-line flags override the file; unknown keys are
rejected before any work starts.

Exit codes: 0 success, 1 usage error, 2 runtime failure. Failures print
one line to stderr prefixed "error:".
"""

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .augment import (COMPOSE_ORDERS, AugmentPolicy, GridMaskConfig, MixupConfig,
                      SpecMaskConfig, grid_mask_pattern, mask_to_pgm)
from .automl import TrialStore, gridmask_space, load_space, model_space, run_search
from .data import (CLASS_NAMES, SyntheticSpec, generate_synthetic, load_manifest,
                   split_entries)
from .errors import ConfigError
from .features.audio import read_wav
from .features.cache import feature_cache_key, read_feature_cache, write_feature_cache
from .features.mfcc import FeatureNormalizer, mfcc
from .model.checkpoint import load_checkpoint
from .model.network import TcskNet, TcskNetConfig, param_count
from .numerics.rng import new_rng
from .train import TrainConfig, evaluate, train

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib


@dataclass
class RunConfig:
    """Every tunable setting, as stored in config files (flat key = value)."""

    batch_size: int = 16
    lr: float = 0.001
    epochs: int = 100
    c_channels: int = 60
    l_size: int = 50
    p_size: int = 11
    dropout: float = 0.2
    n_classes: int = 10
    separable: bool = False
    weight_decay: float = 0.0005
    decay_factor: float = 0.98
    decay_interval: int = 5
    decoupled_decay: bool = True
    augment: str = "none"
    gridmask_p: float = 0.6
    gridmask_mr: float = 0.3
    mixup_alpha: float = 0.2
    n_mels: int = 40
    n_coeffs: int = 39
    deltas: bool = False

    def __post_init__(self):
        if self.augment not in COMPOSE_ORDERS:
            raise ConfigError(f"augment must be one of {COMPOSE_ORDERS}, got {self.augment!r}")

    def net_config(self) -> TcskNetConfig:
        return TcskNetConfig(in_channels=self.n_coeffs, c_channels=self.c_channels,
                             l_size=self.l_size, p_size=self.p_size, dropout=self.dropout,
                             n_classes=self.n_classes, separable=self.separable)

    def train_config(self, epochs: int, seed: int) -> TrainConfig:
        return TrainConfig(lr0=self.lr, weight_decay=self.weight_decay,
                           decay_factor=self.decay_factor, decay_interval=self.decay_interval,
                           batch_size=self.batch_size, epochs=epochs, seed=seed,
                           decoupled_decay=self.decoupled_decay)

    def policy(self) -> AugmentPolicy:
        return AugmentPolicy(order=self.augment,
                             gridmask=GridMaskConfig(p=self.gridmask_p, mr=self.gridmask_mr),
                             mixup=MixupConfig(alpha=self.mixup_alpha),
                             specmask=SpecMaskConfig())


_RC_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def load_run_config(path=None, overrides=None) -> RunConfig:
    """Defaults, then the config file, then flag overrides; then validate."""
    values = {}
    if path is not None:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
        unknown = sorted(set(doc) - set(_RC_FIELDS))
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {unknown}")
        values.update(doc)
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    for name, v in values.items():
        want = type(getattr(RunConfig(), name))
        if want is float and isinstance(v, int) and not isinstance(v, bool):
            values[name] = float(v)
        elif not isinstance(v, want) or (want is not bool and isinstance(v, bool)):
            raise ConfigError(f"config key {name!r} must be {want.__name__}, got {v!r}")
    return RunConfig(**values)


def write_run_config(path, rc: RunConfig) -> None:
    lines = []
    for f in dataclasses.fields(RunConfig):
        v = getattr(rc, f.name)
        if isinstance(v, bool):
            rendered = "true" if v else "false"
        elif isinstance(v, str):
            rendered = f'"{v}"'
        else:
            rendered = repr(v)
        lines.append(f"{f.name} = {rendered}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cache_dir(args) -> Path | None:
    explicit = getattr(args, "cache_dir", None)
    if explicit:
        return Path(explicit)
    env = os.environ.get("FEATURE_CACHE_DIR")
    return Path(env) if env else None


def _featurize_split(manifest_path, split, rc: RunConfig, cache_dir=None):
    """(FeatureMap, label_index) pairs for one split, in manifest order."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    pairs = []
    for e in split_entries(load_manifest(manifest_path), split):
        wav = base / e.path
        fm = None
        cached = None
        if cache_dir is not None:
            cached = cache_dir / feature_cache_key(wav, rc.n_mels, rc.n_coeffs, rc.deltas)
            if cached.exists():
                fm = read_feature_cache(cached)
        if fm is None:
            fm = mfcc(read_wav(wav), n_mels=rc.n_mels, n_coeffs=rc.n_coeffs, deltas=rc.deltas)
            if cached is not None:
                cache_dir.mkdir(parents=True, exist_ok=True)
                write_feature_cache(cached, fm)
        pairs.append((fm, CLASS_NAMES.index(e.label)))
    return pairs


def _feature_extra(rc: RunConfig) -> dict:
    return {"features": {"n_mels": rc.n_mels, "n_coeffs": rc.n_coeffs, "deltas": rc.deltas}}


def _cmd_gen_data(args) -> int:
    spec = SyntheticSpec(n_classes=args.classes, clips_per_class=args.clips_per_class,
                         duration_s=args.duration, sample_rate=args.sample_rate, seed=args.seed)
    manifest = generate_synthetic(spec, args.out)
    print(manifest)
    return 0


def _cmd_extract_features(args) -> int:
    rc = load_run_config(args.config, {"n_mels": args.n_mels, "n_coeffs": args.n_coeffs,
                                       "deltas": True if args.deltas else None})
    manifest = Path(args.manifest)
    cache_dir = Path(args.out) if args.out else (_cache_dir(args) or manifest.parent / ".feature_cache")
    cache_dir.mkdir(parents=True, exist_ok=True)
    n = 0
    for e in load_manifest(manifest):
        wav = manifest.parent / e.path
        dst = cache_dir / feature_cache_key(wav, rc.n_mels, rc.n_coeffs, rc.deltas)
        fm = mfcc(read_wav(wav), n_mels=rc.n_mels, n_coeffs=rc.n_coeffs, deltas=rc.deltas)
        write_feature_cache(dst, fm)
        n += 1
    print(f"{n} feature files -> {cache_dir}")
    return 0


def _train_once(rc: RunConfig, manifest, epochs, seed, cache_dir,
                checkpoint_path=None, report_path=None, policy=None):
    train_pairs = _featurize_split(manifest, "train", rc, cache_dir)
    val_pairs = _featurize_split(manifest, "test", rc, cache_dir)
    normalizer = FeatureNormalizer.fit([fm for fm, _ in train_pairs])
    train_pairs = [(normalizer.transform(fm), y) for fm, y in train_pairs]
    val_pairs = [(normalizer.transform(fm), y) for fm, y in val_pairs]
    net = TcskNet(rc.net_config(), rng=new_rng(seed, 0))
    report = train(net, train_pairs, val_pairs, rc.train_config(epochs, seed),
                   policy=policy if policy is not None else rc.policy(),
                   normalizer=normalizer, checkpoint_path=checkpoint_path,
                   report_path=report_path, extra=_feature_extra(rc))
    return report


def _cmd_train(args) -> int:
    rc = load_run_config(args.config, {
        "batch_size": args.batch_size, "lr": args.lr, "augment": args.augment,
    })
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint = out / "checkpoint.tskn"
    report_csv = out / "report.csv"
    report = _train_once(rc, args.manifest, args.epochs if args.epochs is not None else rc.epochs,
                         args.seed, _cache_dir(args), checkpoint_path=checkpoint,
                         report_path=report_csv)
    print(f"best epoch {report.best_epoch}: val_acc {report.best_acc:.4f}")
    print(f"checkpoint -> {checkpoint}")
    print(f"report -> {report_csv}")
    return 0


def _cmd_eval(args) -> int:
    net, normalizer, extra = load_checkpoint(args.checkpoint)
    feat = extra.get("features", {}) if extra else {}
    rc = load_run_config(None, {
        "n_mels": feat.get("n_mels"), "n_coeffs": feat.get("n_coeffs"),
        "deltas": feat.get("deltas"),
    })
    pairs = _featurize_split(args.manifest, args.split, rc, _cache_dir(args))
    if normalizer is not None:
        pairs = [(normalizer.transform(fm), y) for fm, y in pairs]
    acc, confusion = evaluate(net, pairs)
    print(f"accuracy {acc:.4f} ({int(confusion.trace())}/{int(confusion.sum())})")
    width = max(len(c) for c in CLASS_NAMES[: net.config.n_classes])
    for i in range(net.config.n_classes):
        row = " ".join(f"{int(v):4d}" for v in confusion[i])
        print(f"{CLASS_NAMES[i]:>{width}} {row}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write("true\\pred," + ",".join(CLASS_NAMES[: net.config.n_classes]) + "\n")
            for i in range(net.config.n_classes):
                f.write(CLASS_NAMES[i] + "," + ",".join(str(int(v)) for v in confusion[i]) + "\n")
        print(f"confusion -> {args.out}")
    return 0


def _cmd_search_model(args) -> int:
    rc = load_run_config(args.config, None)
    space = load_space(args.space) if args.space else model_space()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cache_dir = _cache_dir(args)
    manifest = args.manifest

    def objective(config, trial_seed):
        trial_rc = dataclasses.replace(rc, **config)
        report = _train_once(trial_rc, manifest, args.epochs, trial_seed, cache_dir,
                             policy=AugmentPolicy())
        return report.best_acc

    best = run_search(space, objective, args.trials, TrialStore(out / "trials.jsonl"), args.seed)
    best_rc = dataclasses.replace(rc, **best.config)
    write_run_config(out / "best_config.toml", best_rc)
    print(f"best trial {best.trial_id}: objective {best.objective:.4f}")
    print(f"config -> {out / 'best_config.toml'}")
    return 0


def _cmd_search_gridmask(args) -> int:
    rc = load_run_config(args.config, None)
    space = load_space(args.space) if args.space else gridmask_space()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cache_dir = _cache_dir(args)
    manifest = args.manifest

    def objective(config, trial_seed):
        trial_rc = dataclasses.replace(rc, augment="gridmask", **config)
        report = _train_once(trial_rc, manifest, args.epochs, trial_seed, cache_dir)
        return report.best_acc

    best = run_search(space, objective, args.trials, TrialStore(out / "trials.jsonl"), args.seed)
    final_rc = dataclasses.replace(rc, augment="gridmask", **best.config)
    write_run_config(out / "final_config.toml", final_rc)
    print(f"best trial {best.trial_id}: objective {best.objective:.4f}")
    print(f"config -> {out / 'final_config.toml'}")
    return 0


def _cmd_preview_mask(args) -> int:
    d_range = (args.d_min if args.d_min is not None else 8,
               args.d_max if args.d_max is not None else 40)
    cfg = GridMaskConfig(p=1.0, mr=args.mr, d_range=d_range)
    mask = grid_mask_pattern(args.freq_bins, args.frames, cfg.mr, cfg.d_range, new_rng(args.seed, 0))
    Path(args.out).write_bytes(mask_to_pgm(mask))
    print(args.out)
    return 0


def _cmd_param_count(args) -> int:
    rc = load_run_config(args.config, None)
    print(param_count(rc.net_config()))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tcsknet",
                                description="Low-complexity acoustic scene classification toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic toy corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--classes", type=int, default=10)
    g.add_argument("--clips-per-class", type=int, default=20)
    g.add_argument("--duration", type=float, default=2.0)
    g.add_argument("--sample-rate", type=int, default=44100)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=_cmd_gen_data)

    g = sub.add_parser("extract-features", help="precompute the feature cache")
    g.add_argument("--manifest", required=True)
    g.add_argument("--config")
    g.add_argument("--out", help="cache directory (default: FEATURE_CACHE_DIR or <manifest dir>/.feature_cache)")
    g.add_argument("--n-mels", type=int)
    g.add_argument("--n-coeffs", type=int)
    g.add_argument("--deltas", action="store_true")
    g.set_defaults(fn=_cmd_extract_features)

    g = sub.add_parser("train", help="train a model on a manifest")
    g.add_argument("--manifest", required=True)
    g.add_argument("--config")
    g.add_argument("--out", default=".")
    g.add_argument("--epochs", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--augment", choices=COMPOSE_ORDERS)
    g.add_argument("--cache-dir")
    g.set_defaults(fn=_cmd_train)

    g = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    g.add_argument("--manifest", required=True)
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--split", choices=("train", "test"), default="test")
    g.add_argument("--out", help="write the confusion matrix CSV here")
    g.add_argument("--cache-dir")
    g.set_defaults(fn=_cmd_eval)

    g = sub.add_parser("search-model", help="stage 1: search model hyperparameters")
    g.add_argument("--manifest", required=True)
    g.add_argument("--trials", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--config")
    g.add_argument("--space", help="TOML search-space file (default: built-in model space)")
    g.add_argument("--epochs", type=int, default=10, help="training epochs per trial")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--cache-dir")
    g.set_defaults(fn=_cmd_search_model)

    g = sub.add_parser("search-gridmask", help="stage 2: search mask hyperparameters for a fixed model")
    g.add_argument("--manifest", required=True)
    g.add_argument("--trials", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--config", help="model config to freeze (e.g. stage 1's best_config.toml)")
    g.add_argument("--space", help="TOML search-space file (default: built-in mask space)")
    g.add_argument("--epochs", type=int, default=10, help="training epochs per trial")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--cache-dir")
    g.set_defaults(fn=_cmd_search_gridmask)

    g = sub.add_parser("preview-mask", help="write one mask pattern as a PGM image")
    g.add_argument("--out", required=True)
    g.add_argument("--mr", type=float, default=0.3)
    g.add_argument("--freq-bins", type=int, default=39)
    g.add_argument("--frames", type=int, default=860)
    g.add_argument("--d-min", type=int)
    g.add_argument("--d-max", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=_cmd_preview_mask)

    g = sub.add_parser("param-count", help="print the learnable-parameter count for a config")
    g.add_argument("--config")
    g.set_defaults(fn=_cmd_param_count)

    return p


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    try:
        return args.fn(args)
    except (ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
