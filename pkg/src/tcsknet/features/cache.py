"""On-disk feature cache: one file per clip.

Layout: magic b"FEAT", u32 version, u32 sample_rate, u32 frame_hop,
u32 frame_len, then the coefficients as one TNSR tensor. Cache files are
keyed by the resolved clip path plus every setting that changes the
coefficients, so stale files from other settings can never be picked up.
"""

import hashlib
import struct
from pathlib import Path

from ..errors import CheckpointError
from ..numerics.serialize import read_tensor, write_tensor
from .mfcc import FeatureMap

_MAGIC = b"FEAT"
_VERSION = 1


def feature_cache_key(clip_path, n_mels: int, n_coeffs: int, deltas: bool,
                      n_fft: int = 1024, hop: int = 512) -> str:
    ident = f"{Path(clip_path).resolve()}|{n_mels}|{n_coeffs}|{int(deltas)}|{n_fft}|{hop}|v{_VERSION}"
    return hashlib.sha256(ident.encode()).hexdigest()[:32] + ".feat"


def write_feature_cache(path, fm: FeatureMap) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIII", _VERSION, fm.sample_rate, fm.frame_hop, fm.frame_len))
        write_tensor(fh, fm.coeffs)


def read_feature_cache(path) -> FeatureMap:
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head != _MAGIC:
            raise CheckpointError(f"{path}: bad feature-cache magic {head!r}")
        raw = fh.read(16)
        if len(raw) != 16:
            raise CheckpointError(f"{path}: truncated feature-cache header")
        version, rate, hop, frame_len = struct.unpack("<IIII", raw)
        if version != _VERSION:
            raise CheckpointError(f"{path}: unsupported feature-cache version {version}")
        coeffs = read_tensor(fh)
    return FeatureMap(coeffs, frame_hop=hop, frame_len=frame_len, sample_rate=rate)
