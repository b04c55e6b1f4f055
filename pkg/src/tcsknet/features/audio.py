"""Mono PCM WAV input (16/24-bit) and the 16-bit writer the toolkit emits."""

import wave
from dataclasses import dataclass

import numpy as np

from ..errors import AudioFormatError


@dataclass
class AudioClip:
    """Mono audio in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise AudioFormatError(f"AudioClip needs a nonempty 1-d signal, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise AudioFormatError(f"AudioClip sample_rate must be positive, got {self.sample_rate}")


def read_wav(path) -> AudioClip:
    """Read a mono PCM RIFF file, 16-bit or 24-bit little-endian.

    Anything else (float WAVs, multichannel, other widths) raises
    AudioFormatError naming what was found.
    """
    try:
        with wave.open(str(path), "rb") as fh:
            n_channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except wave.Error as exc:
        # the wave module's message names the format tag for e.g. float WAVs
        raise AudioFormatError(f"{path}: {exc}") from exc
    if n_channels != 1:
        raise AudioFormatError(f"{path}: expected mono, got {n_channels} channels")
    if width == 2:
        x = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    elif width == 3:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        val = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        val = np.where(val & 0x800000, val - (1 << 24), val)
        x = val.astype(np.float64) / 8388608.0
    else:
        raise AudioFormatError(f"{path}: unsupported PCM sample width {width * 8} bit (need 16 or 24)")
    if x.size == 0:
        raise AudioFormatError(f"{path}: no audio frames")
    return AudioClip(x, rate)


def write_wav_pcm16(path, samples, sample_rate: int) -> None:
    """Write [-1,1] samples as mono 16-bit PCM (values clipped, then rounded)."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(x * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(sample_rate))
        fh.writeframes(pcm.tobytes())
