from .network import (
    TcskBlockParams,
    TcskNet,
    TcskNetConfig,
    min_frames,
    param_count,
    sk_fuse,
    tcsk_block_forward,
    tcsknet_forward,
)
from .checkpoint import CHECKPOINT_MAGIC, load_checkpoint, save_checkpoint

__all__ = [
    "CHECKPOINT_MAGIC",
    "TcskBlockParams",
    "TcskNet",
    "TcskNetConfig",
    "load_checkpoint",
    "min_frames",
    "param_count",
    "save_checkpoint",
    "sk_fuse",
    "tcsk_block_forward",
    "tcsknet_forward",
]
