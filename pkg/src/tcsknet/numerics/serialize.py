"""Binary tensor format: b"TNSR", u32 rank, u64 extents, float32 data.

Everything little-endian. The checkpoint and feature-cache formats embed
tensors written this way.
"""

import struct

import numpy as np

from ..errors import CheckpointError

TENSOR_MAGIC = b"TNSR"
_MAX_RANK = 32


def write_tensor(fh, array) -> None:
    """Write one array as a TNSR record (data stored as float32)."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    fh.write(TENSOR_MAGIC)
    fh.write(struct.pack("<I", arr.ndim))
    if arr.ndim:
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(arr.tobytes())


def read_tensor(fh) -> np.ndarray:
    """Read one TNSR record; returns a float32 array."""
    magic = _read_exact(fh, 4, "tensor magic")
    if magic != TENSOR_MAGIC:
        raise CheckpointError(f"bad tensor magic {magic!r}, expected {TENSOR_MAGIC!r}")
    (rank,) = struct.unpack("<I", _read_exact(fh, 4, "tensor rank"))
    if rank > _MAX_RANK:
        raise CheckpointError(f"implausible tensor rank {rank}")
    shape = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank, "tensor extents")) if rank else ()
    count = 1
    for extent in shape:
        count *= extent
    raw = _read_exact(fh, 4 * count, "tensor data")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()


def save_tensor(path, array) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, array)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated file: wanted {n} bytes of {what}, got {len(buf)}")
    return buf
