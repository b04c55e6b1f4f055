"""Checkpoint format: magic "TSKN", u32 version, JSON config block,
normalization stats, then named weight tensors (numerics binary format).

Everything little-endian; weights are float32, so save -> load round-trips
bit-exactly. Batchnorm running statistics ride along as extra named
tensors when they exist; their absence round-trips too (a never-trained
net loads back with uninitialized statistics).
"""

import dataclasses
import json
import struct

from ..errors import CheckpointError
from ..features.mfcc import FeatureNormalizer
from ..numerics.serialize import read_tensor, write_tensor
from .network import TcskNet, TcskNetConfig

CHECKPOINT_MAGIC = b"TSKN"
_VERSION = 1


def save_checkpoint(path, net: TcskNet, normalizer: FeatureNormalizer | None = None,
                    extra: dict | None = None) -> None:
    """Write config + normalization stats + all weights and BN statistics.

    `extra` is a small JSON-serializable dict for caller metadata (e.g. the
    feature settings a training run used).
    """
    header = {
        "model": dataclasses.asdict(net.config),
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()

    tensors = list(net.named_parameters())
    for name, bn in net.batchnorms():
        if bn.state.initialized:
            tensors.append((f"{name}.running_mean", _Arr(bn.state.running_mean)))
            tensors.append((f"{name}.running_var", _Arr(bn.state.running_var)))

    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<B", 1 if normalizer is not None else 0))
        if normalizer is not None:
            write_tensor(fh, normalizer.mean)
            write_tensor(fh, normalizer.std)
        fh.write(struct.pack("<I", len(tensors)))
        for name, tensor in tensors:
            encoded = name.encode()
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            write_tensor(fh, tensor.data)


class _Arr:
    # lets plain ndarrays share the named-tensor write path
    def __init__(self, data):
        self.data = data


def load_checkpoint(path):
    """Read a checkpoint; returns (net, normalizer_or_None, extra_dict)."""
    with open(path, "rb") as fh:
        magic = _read(fh, 4, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: bad checkpoint magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        (version,) = struct.unpack("<I", _read(fh, 4, "version"))
        if version != _VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version} (reader supports {_VERSION})")
        (blob_len,) = struct.unpack("<I", _read(fh, 4, "config length"))
        try:
            header = json.loads(_read(fh, blob_len, "config block"))
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: corrupt config block: {exc}") from exc
        try:
            config = TcskNetConfig(**header["model"])
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"{path}: config block missing model fields: {exc}") from exc

        (has_norm,) = struct.unpack("<B", _read(fh, 1, "normalizer flag"))
        normalizer = None
        if has_norm:
            mean = read_tensor(fh)
            std = read_tensor(fh)
            normalizer = FeatureNormalizer(mean, std)

        (n_tensors,) = struct.unpack("<I", _read(fh, 4, "tensor count"))
        loaded = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<H", _read(fh, 2, "tensor name length"))
            name = _read(fh, name_len, "tensor name").decode()
            loaded[name] = read_tensor(fh)

    net = TcskNet(config, rng=None)
    for name, param in net.named_parameters():
        if name not in loaded:
            raise CheckpointError(f"{path}: checkpoint is missing tensor {name!r}")
        arr = loaded.pop(name)
        if arr.shape != param.data.shape:
            raise CheckpointError(
                f"{path}: tensor {name!r} has shape {arr.shape}, model expects {param.data.shape}"
            )
        param.data = arr
    for name, bn in net.batchnorms():
        mean_key, var_key = f"{name}.running_mean", f"{name}.running_var"
        if mean_key in loaded:
            if var_key not in loaded:
                raise CheckpointError(f"{path}: {mean_key!r} present without {var_key!r}")
            bn.state.running_mean = loaded.pop(mean_key)
            bn.state.running_var = loaded.pop(var_key)
    if loaded:
        raise CheckpointError(f"{path}: checkpoint holds unknown tensors {sorted(loaded)}")
    return net, normalizer, header.get("extra", {})


def _read(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint: wanted {n} bytes of {what}, got {len(buf)}")
    return buf
