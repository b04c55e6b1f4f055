"""STFT -> mel -> log -> DCT front-end producing [39 x T] feature maps.

Defaults follow the pipeline's fixed frame geometry: 1024-point FFT, hop
512, periodic Hann window, 40 triangular mel bands spanning 0..Nyquist,
log floor 1e-10, orthonormal DCT-II, first 39 coefficients kept. The
`deltas` switch instead stacks 13 static + delta + delta-delta (still 39
rows). Internals run in float64; stored coefficients are float32.
"""

from dataclasses import dataclass, replace

import numpy as np
import scipy.fft

from ..errors import ConfigError, DimensionError
from .audio import AudioClip

LOG_FLOOR = 1e-10


@dataclass
class FeatureMap:
    """MFCC spectrogram: coeffs[39, T] plus the frame geometry it came from."""

    coeffs: np.ndarray
    frame_hop: int = 512
    frame_len: int = 1024
    sample_rate: int = 44100

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs)
        if self.coeffs.ndim != 2:
            raise DimensionError(f"FeatureMap coeffs must be 2-d, got shape {self.coeffs.shape}")

    @property
    def n_frames(self) -> int:
        return self.coeffs.shape[1]


def n_frames(num_samples: int, n_fft: int = 1024, hop: int = 512) -> int:
    """1 + floor((num_samples - n_fft)/hop); trailing partial frame dropped."""
    if num_samples < n_fft:
        raise DimensionError(f"need at least {n_fft} samples for one frame, got {num_samples}")
    return 1 + (num_samples - n_fft) // hop


def hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(clip: AudioClip, n_fft: int = 1024, hop: int = 512) -> np.ndarray:
    """Hann-windowed one-sided DFT: complex [n_fft//2 + 1, T_frames].

    Frame t covers samples [t*hop, t*hop + n_fft).
    """
    x = clip.samples
    t_frames = n_frames(x.size, n_fft, hop)  # raises on short clips
    frames = np.lib.stride_tricks.sliding_window_view(x, n_fft)[:: hop][:t_frames]
    spec = np.fft.rfft(frames * hann_periodic(n_fft), axis=1)
    return spec.T


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters [n_mels, n_fft//2+1], peak 1, 0 Hz to Nyquist.

    Centers equally spaced on the HTK mel scale (2595*log10(1 + f/700));
    each triangle rises/falls linearly in Hz, so adjacent filters sum to 1
    between the first and last centers.
    """
    if n_mels < 1:
        raise ConfigError(f"n_mels must be >= 1, got {n_mels}")

    def to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def to_hz(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    edges_hz = to_hz(np.linspace(0.0, to_mel(sample_rate / 2.0), n_mels + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    fb = np.zeros((n_mels, bin_hz.size))
    for m in range(n_mels):
        lo, mid, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        rise = (bin_hz - lo) / (mid - lo)
        fall = (hi - bin_hz) / (hi - mid)
        fb[m] = np.clip(np.minimum(rise, fall), 0.0, 1.0)
    return fb


def mfcc(clip: AudioClip, n_mels: int = 40, n_coeffs: int = 39, deltas: bool = False,
         n_fft: int = 1024, hop: int = 512) -> FeatureMap:
    """Extract the MFCC feature map for one clip.

    deltas=False keeps the first `n_coeffs` static coefficients.
    deltas=True keeps n_coeffs//3 static coefficients and stacks their
    delta and delta-delta rows (n_coeffs must be divisible by 3).
    Deterministic: the same clip always yields a bitwise-identical map.
    """
    if n_coeffs > n_mels:
        raise ConfigError(f"n_coeffs ({n_coeffs}) cannot exceed n_mels ({n_mels})")
    if deltas and n_coeffs % 3:
        raise ConfigError(f"deltas needs n_coeffs divisible by 3, got {n_coeffs}")

    power = np.abs(stft(clip, n_fft, hop)) ** 2
    mel = mel_filterbank(n_mels, n_fft, clip.sample_rate) @ power
    logmel = np.log(np.maximum(mel, LOG_FLOOR))
    cep = scipy.fft.dct(logmel, type=2, axis=0, norm="ortho")

    if deltas:
        static = cep[: n_coeffs // 3]
        d1 = _delta(static)
        out = np.concatenate([static, d1, _delta(d1)], axis=0)
    else:
        out = cep[:n_coeffs]
    return FeatureMap(out.astype(np.float32), frame_hop=hop, frame_len=n_fft,
                      sample_rate=clip.sample_rate)


def _delta(c: np.ndarray, width: int = 2) -> np.ndarray:
    # regression deltas over +-width frames, edges replicate-padded
    denom = 2.0 * sum(n * n for n in range(1, width + 1))
    padded = np.pad(c, ((0, 0), (width, width)), mode="edge")
    out = np.zeros_like(c)
    t = c.shape[1]
    for n in range(1, width + 1):
        out += n * (padded[:, width + n : width + n + t] - padded[:, width - n : width - n + t])
    return out / denom


class FeatureNormalizer:
    """Per-coefficient mean/std computed over the training split.

    Population std, floored at 1e-8. fit() pools frames across all given
    maps; transform() returns a new map of float32 standardized coeffs.
    Persisted inside checkpoints so evaluation reuses training statistics.
    """

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float32)
        self.std = np.asarray(std, dtype=np.float32)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise DimensionError(
                f"normalizer stats must be matching vectors, got {self.mean.shape} and {self.std.shape}"
            )

    @classmethod
    def fit(cls, maps) -> "FeatureNormalizer":
        maps = list(maps)
        if not maps:
            raise ConfigError("FeatureNormalizer.fit needs at least one feature map")
        pooled = np.concatenate([fm.coeffs.astype(np.float64) for fm in maps], axis=1)
        mean = pooled.mean(axis=1)
        std = np.maximum(pooled.std(axis=1), 1e-8)
        return cls(mean.astype(np.float32), std.astype(np.float32))

    def transform(self, fm: FeatureMap) -> FeatureMap:
        if fm.coeffs.shape[0] != self.mean.size:
            raise DimensionError(
                f"normalizer fitted for {self.mean.size} coefficients, map has {fm.coeffs.shape[0]}"
            )
        scaled = (fm.coeffs - self.mean[:, None]) / self.std[:, None]
        return replace(fm, coeffs=scaled.astype(np.float32))
