"""Low-complexity acoustic scene classification toolkit.

Selective-kernel temporal-convolution networks on MFCC features, grid and
spectrum masking plus mixup augmentation, and a TPE hyperparameter search,
all on a small self-contained tensor library.
"""

__version__ = "0.1.0"

from .augment import AugmentPolicy, GridMaskConfig, MixupConfig, SpecMaskConfig
from .automl import ParamSpec, SearchSpace, Trial, TrialStore, run_search, tpe_suggest
from .data import CLASS_NAMES, SyntheticSpec, generate_synthetic, load_manifest
from .features.mfcc import FeatureMap, FeatureNormalizer, mfcc
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.network import TcskNet, TcskNetConfig, param_count, tcsknet_forward
from .numerics.tensor import Tensor
from .train import TrainConfig, evaluate, lr_at, train

__all__ = [
    "AugmentPolicy", "GridMaskConfig", "MixupConfig", "SpecMaskConfig",
    "ParamSpec", "SearchSpace", "Trial", "TrialStore", "run_search", "tpe_suggest",
    "CLASS_NAMES", "SyntheticSpec", "generate_synthetic", "load_manifest",
    "FeatureMap", "FeatureNormalizer", "mfcc",
    "load_checkpoint", "save_checkpoint",
    "TcskNet", "TcskNetConfig", "param_count", "tcsknet_forward",
    "Tensor",
    "TrainConfig", "evaluate", "lr_at", "train",
    "__version__",
]
