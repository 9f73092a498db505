"""
Загрузка аудио и многооконная лог-мел спектрограмма (3 окна STFT, hop 160, 229 мел-полос).
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from math import gcd
from pathlib import Path
from typing import Tuple, Union

import librosa
import numpy as np
import soundfile as sf
from scipy.signal import resample_poly

from common.errors import AudioFormatError, ContractError, ShapeError, UnsupportedCodecError

logger = logging.getLogger(__name__)

CANONICAL_RATE = 16000
SUPPORTED_SUBTYPES = {"PCM_U8", "PCM_S8", "PCM_16", "PCM_24", "PCM_32", "FLOAT"}
SUPPORTED_FORMATS = {"WAV", "WAVEX"}


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = CANONICAL_RATE

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ContractError(f"sample_rate must be positive, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float32).reshape(-1)
        if not np.all(np.isfinite(samples)):
            raise ContractError("audio samples must be finite")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class MelConfig:
    window_lengths: Tuple[int, ...] = (512, 768, 1024)
    hop: int = 160
    n_mels: int = 229
    sample_rate: int = CANONICAL_RATE
    fmin: float = 30.0
    fmax: float = 8000.0
    log_floor: float = 1e-10

    def __post_init__(self):
        object.__setattr__(self, "window_lengths", tuple(int(w) for w in self.window_lengths))
        if not self.window_lengths:
            raise ContractError("at least one STFT window length is required")
        if any(w < self.hop for w in self.window_lengths):
            raise ContractError(f"window lengths {self.window_lengths} must be >= hop {self.hop}")
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ContractError(f"mel range [{self.fmin}, {self.fmax}] outside (0, Nyquist]")
        if self.log_floor <= 0:
            raise ContractError("log_floor must be positive")

    @property
    def frame_period(self) -> float:
        return self.hop / self.sample_rate

    @property
    def floor_value(self) -> float:
        return float(np.log(self.log_floor))

    def frames_for(self, n_samples: int) -> int:
        return n_samples // self.hop + 1


@dataclass(frozen=True)
class MelTensor:
    values: np.ndarray  # (channels, frames, bins)
    frame_period: float = 0.01
    floor_value: float = field(default=float(np.log(1e-10)))

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ShapeError(f"mel tensor must be 3-D, got shape {self.values.shape}")

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]

    @property
    def n_bins(self) -> int:
        return self.values.shape[2]

    def segment(self, start: int, n_frames: int) -> "MelTensor":
        """Срез по времени; недостающие кадры заполняются значением тишины."""
        out = np.full((self.n_channels, n_frames, self.n_bins), self.floor_value, dtype=np.float32)
        start = max(0, start)
        stop = min(self.n_frames, start + n_frames)
        if stop > start:
            out[:, : stop - start] = self.values[:, start:stop]
        return MelTensor(out, self.frame_period, self.floor_value)


def _resample(samples: np.ndarray, source_rate: int, target_rate: int) -> np.ndarray:
    if source_rate == target_rate:
        return samples
    g = gcd(int(source_rate), int(target_rate))
    return resample_poly(samples, int(target_rate) // g, int(source_rate) // g)


def load_audio(path: Union[str, Path], target_rate: int = CANONICAL_RATE) -> AudioClip:
    path = Path(path)
    if target_rate <= 0:
        raise ContractError(f"target_rate must be positive, got {target_rate}")

    try:
        info = sf.info(str(path))
    except Exception as e:
        raise AudioFormatError(f"{path}: unreadable audio file ({e})")

    if info.format not in SUPPORTED_FORMATS:
        raise UnsupportedCodecError(f"{path}: container {info.format} is not WAV")
    if info.subtype not in SUPPORTED_SUBTYPES:
        raise UnsupportedCodecError(f"{path}: unsupported WAV encoding {info.subtype}")

    try:
        data, rate = sf.read(str(path), dtype="float64", always_2d=True)
    except Exception as e:
        raise AudioFormatError(f"{path}: corrupt audio data ({e})")

    mono = data.mean(axis=1) if data.shape[1] > 0 else np.zeros(0)
    mono = _resample(mono, rate, target_rate)
    mono = np.clip(mono, -1.0, 1.0)
    logger.debug(f"Загружен {path.name}: {info.channels} кан., {rate} Гц -> {target_rate} Гц")
    return AudioClip(mono.astype(np.float32), target_rate)


def save_audio(path: Union[str, Path], clip: AudioClip, subtype: str = "PCM_16"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), clip.samples, clip.sample_rate, subtype=subtype, format="WAV")


@lru_cache(maxsize=16)
def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    # norm="slaney" -> треугольники с нормировкой по площади
    return librosa.filters.mel(
        sr=sample_rate, n_fft=n_fft, n_mels=n_mels, fmin=fmin, fmax=fmax, htk=False, norm="slaney"
    )


def mel_center_frequencies(config: MelConfig) -> np.ndarray:
    edges = librosa.mel_frequencies(n_mels=config.n_mels + 2, fmin=config.fmin, fmax=config.fmax, htk=False)
    return edges[1:-1]


def compute_mel(clip: AudioClip, config: MelConfig = MelConfig()) -> MelTensor:
    if clip.sample_rate != config.sample_rate:
        raise ContractError(
            f"clip rate {clip.sample_rate} Hz does not match mel config rate {config.sample_rate} Hz"
        )
    if len(clip) == 0:
        raise ContractError("cannot compute a spectrogram of an empty clip")

    samples = clip.samples.astype(np.float64)
    n_frames = config.frames_for(len(samples))
    channels = []

    for window in config.window_lengths:
        # reflect требует сигнал длиннее половины окна
        pad_mode = "reflect" if len(samples) > window // 2 else "constant"
        spec = librosa.stft(
            samples,
            n_fft=window,
            hop_length=config.hop,
            win_length=window,
            window="hann",
            center=True,
            pad_mode=pad_mode,
        )
        power = np.abs(spec) ** 2
        mel = mel_filterbank(config.sample_rate, window, config.n_mels, config.fmin, config.fmax) @ power
        channels.append(np.log(mel[:, :n_frames] + config.log_floor).T)

    values = np.stack(channels).astype(np.float32)
    return MelTensor(values, config.frame_period, config.floor_value)


def clip_or_pad(clip: AudioClip, duration: float) -> AudioClip:
    if duration <= 0:
        raise ContractError(f"duration must be positive, got {duration}")
    target = int(round(duration * clip.sample_rate))
    samples = clip.samples[:target]
    if len(samples) < target:
        samples = np.concatenate([samples, np.zeros(target - len(samples), dtype=np.float32)])
    return AudioClip(samples, clip.sample_rate)
