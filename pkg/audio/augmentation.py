"""
Цепочка эффектов для обучающего аудио: питч-шифт, +5 дБ, два полосовых фильтра, реверберация.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import librosa
import numpy as np
from scipy.signal import iirpeak, lfilter

from common.errors import ContractError
from .frontend import CANONICAL_RATE, AudioClip

logger = logging.getLogger(__name__)

# Задержки гребенчатых и всепропускающих фильтров (мс) при room_size = 0.5
COMB_DELAYS_MS = (25.31, 26.94, 28.96, 30.75)
ALLPASS_DELAYS_MS = (12.61, 10.00)
ALLPASS_GAIN = 0.5
SOFT_CLIP_KNEE = 0.9


@dataclass(frozen=True)
class EffectChainConfig:
    pitch_shift_range: float = 0.1
    gain_db: float = 5.0
    bandpass_count: int = 2
    cutoff_range: Tuple[float, float] = (32.0, 4096.0)
    resonance_range: Tuple[float, float] = (0.5, 2.0)
    reverb_room_size: float = 0.35
    reverb_wet: float = 0.3
    enabled: bool = True
    # отдельные стадии можно выключать (используется в тестах)
    use_pitch_shift: bool = True
    use_gain: bool = True
    use_bandpass: bool = True
    use_reverb: bool = True

    def __post_init__(self):
        object.__setattr__(self, "cutoff_range", tuple(float(c) for c in self.cutoff_range))
        object.__setattr__(self, "resonance_range", tuple(float(q) for q in self.resonance_range))
        lo, hi = self.cutoff_range
        if not 0 < lo <= hi < CANONICAL_RATE / 2:
            raise ContractError(f"cutoff range {self.cutoff_range} must lie inside (0, Nyquist)")
        if min(self.resonance_range) <= 0:
            raise ContractError(f"resonance range {self.resonance_range} must be positive")
        if not 0 <= self.reverb_room_size <= 1 or not 0 <= self.reverb_wet <= 1:
            raise ContractError("reverb room size and wet level must be in [0, 1]")


def soft_clip(samples: np.ndarray, knee: float = SOFT_CLIP_KNEE) -> np.ndarray:
    """Линейно до knee, выше - tanh-насыщение к +-1 (непрерывно вместе с производной)."""
    mag = np.abs(samples)
    over = mag > knee
    out = samples.copy()
    span = 1.0 - knee
    out[over] = np.sign(samples[over]) * (knee + span * np.tanh((mag[over] - knee) / span))
    return out


def pitch_shift(samples: np.ndarray, sample_rate: int, semitones: float) -> np.ndarray:
    if semitones == 0 or len(samples) == 0:
        return samples.copy()
    # resample + phase vocoder; librosa сохраняет длину
    shifted = librosa.effects.pitch_shift(samples.astype(np.float64), sr=sample_rate, n_steps=semitones)
    return librosa.util.fix_length(shifted, size=len(samples))


def apply_gain(samples: np.ndarray, gain_db: float) -> np.ndarray:
    return samples * 10.0 ** (gain_db / 20.0)


def bandpass(samples: np.ndarray, sample_rate: int, center: float, q: float) -> np.ndarray:
    # второй порядок, 0 дБ в центре
    b, a = iirpeak(center, q, fs=sample_rate)
    return lfilter(b, a, samples)


def reverb(samples: np.ndarray, sample_rate: int, room_size: float, wet: float) -> np.ndarray:
    """Schroeder: 4 параллельных гребенчатых фильтра + 2 последовательных all-pass."""
    if len(samples) == 0:
        return samples.copy()
    scale = 0.5 + room_size
    feedback = 0.7 + 0.28 * room_size
    wet_signal = np.zeros_like(samples, dtype=np.float64)

    for delay_ms in COMB_DELAYS_MS:
        delay = max(1, int(round(delay_ms * scale * sample_rate / 1000.0)))
        b = np.zeros(delay + 1)
        b[delay] = 1.0
        a = np.zeros(delay + 1)
        a[0] = 1.0
        a[delay] = -feedback
        wet_signal += lfilter(b, a, samples)
    wet_signal /= len(COMB_DELAYS_MS)

    for delay_ms in ALLPASS_DELAYS_MS:
        delay = max(1, int(round(delay_ms * sample_rate / 1000.0)))
        b = np.zeros(delay + 1)
        b[0] = -ALLPASS_GAIN
        b[delay] = 1.0
        a = np.zeros(delay + 1)
        a[0] = 1.0
        a[delay] = -ALLPASS_GAIN
        wet_signal = lfilter(b, a, wet_signal)

    return (1.0 - wet) * samples + wet * wet_signal


def augment(clip: AudioClip, config: EffectChainConfig = EffectChainConfig(), seed: int = 0) -> AudioClip:
    if not config.enabled:
        return clip
    if clip.sample_rate != CANONICAL_RATE:
        raise ContractError(f"augmentation expects {CANONICAL_RATE} Hz audio, got {clip.sample_rate} Hz")

    rng = np.random.default_rng(seed)
    # параметры тянем всегда в одном порядке, чтобы выключение стадии не сдвигало остальные
    semitones = rng.uniform(-config.pitch_shift_range, config.pitch_shift_range)
    centers = rng.uniform(config.cutoff_range[0], config.cutoff_range[1], size=config.bandpass_count)
    qs = rng.uniform(config.resonance_range[0], config.resonance_range[1], size=config.bandpass_count)

    rate = clip.sample_rate
    samples = clip.samples.astype(np.float64)

    if config.use_pitch_shift:
        samples = pitch_shift(samples, rate, semitones)
    if config.use_gain:
        samples = soft_clip(apply_gain(samples, config.gain_db))
    if config.use_bandpass:
        for center, q in zip(centers, qs):
            samples = bandpass(samples, rate, center, q)
    if config.use_reverb:
        samples = reverb(samples, rate, config.reverb_room_size, config.reverb_wet)

    samples = soft_clip(samples)
    logger.debug(f"augment seed={seed}: shift={semitones:+.3f} st, centers={np.round(centers, 1).tolist()}")
    return AudioClip(samples.astype(np.float32), rate)
