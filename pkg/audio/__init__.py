from .frontend import (
    CANONICAL_RATE,
    AudioClip,
    MelConfig,
    MelTensor,
    load_audio,
    save_audio,
    compute_mel,
    clip_or_pad,
    mel_center_frequencies,
)
from .augmentation import EffectChainConfig, augment
