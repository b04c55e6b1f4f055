from .audio import AudioClip, read_wav, write_wav_pcm16
from .mfcc import (
    FeatureMap,
    FeatureNormalizer,
    hann_periodic,
    mel_filterbank,
    mfcc,
    n_frames,
    stft,
)
from .cache import feature_cache_key, read_feature_cache, write_feature_cache

__all__ = [
    "AudioClip",
    "FeatureMap",
    "FeatureNormalizer",
    "feature_cache_key",
    "hann_periodic",
    "mel_filterbank",
    "mfcc",
    "n_frames",
    "read_feature_cache",
    "read_wav",
    "stft",
    "write_feature_cache",
    "write_wav_pcm16",
]
