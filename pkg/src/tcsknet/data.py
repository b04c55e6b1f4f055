"""Corpus handling: the WAV+CSV manifest format and a synthetic toy corpus.

The synthetic generator exists so the whole pipeline can be verified in
minutes: ten classes of noisy sinusoids whose mean cepstra are linearly
separable, which any competent model should classify almost perfectly.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ManifestError
from .features.audio import read_wav, write_wav_pcm16
from .numerics.rng import new_rng

CLASS_NAMES = (
    "airport",
    "bus",
    "metro",
    "metro_station",
    "park",
    "public_square",
    "shopping_mall",
    "street_pedestrian",
    "street_traffic",
    "tram",
)

_SPLITS = ("train", "test")
_HEADER = ["path", "label", "device", "split"]


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    device: str
    split: str


def load_manifest(path, classes=CLASS_NAMES) -> list:
    """Parse and validate a manifest CSV; entries come back in file order.

    Rows must reference existing files (relative to the manifest's
    directory), carry a known label and a train/test split, and no path
    may repeat. Violations raise ManifestError naming the row.
    """
    path = Path(path)
    base = path.parent
    entries = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty file, expected header {','.join(_HEADER)}") from None
        if header != _HEADER:
            raise ManifestError(f"{path}: bad header {header!r}, expected {_HEADER!r}")
        for row_n, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ManifestError(f"{path}:{row_n}: expected 4 fields, got {len(row)}")
            rel, label, device, split = row
            if label not in classes:
                raise ManifestError(f"{path}:{row_n}: unknown label {label!r}")
            if split not in _SPLITS:
                raise ManifestError(f"{path}:{row_n}: bad split {split!r}, expected train or test")
            if rel in seen:
                raise ManifestError(f"{path}:{row_n}: duplicate path {rel!r}")
            if not (base / rel).exists():
                raise ManifestError(f"{path}:{row_n}: missing file {rel!r}")
            seen.add(rel)
            entries.append(ManifestEntry(rel, label, device, split))
    return entries


def split_entries(entries, split: str) -> list:
    if split not in _SPLITS:
        raise ConfigError(f"split must be train or test, got {split!r}")
    return [e for e in entries if e.split == split]


@dataclass
class SyntheticSpec:
    n_classes: int = 10
    clips_per_class: int = 20
    duration_s: float = 2.0
    sample_rate: int = 44100
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.n_classes <= len(CLASS_NAMES):
            raise ConfigError(f"n_classes must lie in [2, {len(CLASS_NAMES)}], got {self.n_classes}")
        if self.clips_per_class < 1 or self.duration_s <= 0 or self.sample_rate < 1:
            raise ConfigError("clips_per_class, duration_s, sample_rate must be positive")


def generate_synthetic(spec: SyntheticSpec, out_dir) -> Path:
    """Write the toy corpus and its manifest; returns the manifest path.

    Class k is a sinusoid at 300*(k+1) Hz with a clip-specific random
    phase, +-3 dB amplitude jitter around 0.3, and white noise at 10 dB
    SNR. Per class the first 70% (rounded) of clips go to the train split.
    Each clip's draws come from its own (seed, class, clip) stream, so the
    corpus is byte-identical for a given spec.
    """
    out_dir = Path(out_dir)
    audio_dir = out_dir / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)
    n = int(round(spec.duration_s * spec.sample_rate))
    t = np.arange(n, dtype=np.float64) / spec.sample_rate
    n_train = int(round(0.7 * spec.clips_per_class))

    rows = []
    for k in range(spec.n_classes):
        label = CLASS_NAMES[k]
        freq = 300.0 * (k + 1)
        for i in range(spec.clips_per_class):
            rng = new_rng(spec.seed, k, i)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            gain_db = rng.uniform(-3.0, 3.0)
            amp = 0.3 * 10.0 ** (gain_db / 20.0)
            signal = amp * np.sin(2.0 * np.pi * freq * t + phase)
            noise_std = np.sqrt((amp * amp / 2.0) / 10.0)
            samples = signal + rng.normal(0.0, noise_std, n)
            rel = f"audio/{label}-{i:03d}.wav"
            write_wav_pcm16(out_dir / rel, samples, spec.sample_rate)
            split = "train" if i < n_train else "test"
            rows.append([rel, label, "synthetic", split])

    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(_HEADER)
        w.writerows(rows)
    return manifest


def load_clips(manifest_path, split: str, classes=CLASS_NAMES) -> list:
    """Decode one split to (AudioClip, label_index) pairs, manifest order."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    out = []
    for e in split_entries(load_manifest(manifest_path, classes), split):
        out.append((read_wav(base / e.path), classes.index(e.label)))
    return out
