"""
Встроенный параметрический синтез: аддитивный гармонический ряд + огибающая техники + шум смычка.
"""

import logging
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.signal import butter, sosfilt

from audio.frontend import CANONICAL_RATE, AudioClip
from annotations.technique import Technique
from common.errors import ContractError, RangeError
from common.utils import derive_seed
from .patches import DEFAULT_PATCHES, PLUCKED, SUSTAIN, TechniquePatch

logger = logging.getLogger(__name__)

HEADROOM = 0.99
MAX_PARTIAL_FREQ = 0.45 * CANONICAL_RATE
NOISE_BAND = (1500.0, 6000.0)


def midi_to_hz(pitch: float) -> float:
    return 440.0 * 2.0 ** ((pitch - 69) / 12.0)


def _raised_cosine(n: int) -> np.ndarray:
    if n <= 0:
        return np.zeros(0)
    return 0.5 - 0.5 * np.cos(np.pi * np.arange(n) / n)


def note_envelope(patch: TechniquePatch, duration: float, n_samples: int,
                  sample_rate: int = CANONICAL_RATE) -> np.ndarray:
    t = np.arange(n_samples) / sample_rate
    env = np.ones(n_samples)

    if patch.decay_mode != SUSTAIN:
        env = np.exp(-np.maximum(t - patch.attack, 0.0) / patch.decay_tau)

    n_attack = int(round(patch.attack * sample_rate))
    if n_attack > 0:
        env[:n_attack] *= _raised_cosine(n_attack)

    # звук ограничен max_sound_duration (spiccato) - затухание заканчивается к этой границе
    if patch.max_sound_duration is not None and patch.max_sound_duration < duration:
        fade_start = max(patch.attack, patch.max_sound_duration - patch.release)
    else:
        fade_start = duration
    i0 = min(n_samples, int(round(fade_start * sample_rate)))
    n_fade = int(round(patch.release * sample_rate))
    fade = 1.0 - _raised_cosine(n_fade)
    i1 = min(n_samples, i0 + n_fade)
    env[i0:i1] *= fade[: i1 - i0]
    env[i1:] = 0.0
    return env


def render_note(pitch: int, duration: float, patch: TechniquePatch, seed: int = 0,
                sample_rate: int = CANONICAL_RATE) -> AudioClip:
    if duration <= 0:
        raise ContractError(f"note duration must be positive, got {duration}")
    lo, hi = patch.pitch_range
    if not lo <= pitch <= hi:
        raise RangeError(f"pitch {pitch} outside {patch.technique.label} range {lo}..{hi}")

    rng = np.random.default_rng(seed)
    n_samples = int(round((duration + patch.release) * sample_rate))
    t = np.arange(n_samples) / sample_rate
    f0 = midi_to_hz(pitch)

    tone = np.zeros(n_samples)
    for k, amp in enumerate(patch.partial_amplitudes):
        freq = f0 * (k + 1)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        if freq >= MAX_PARTIAL_FREQ or amp == 0:
            continue
        partial = amp * np.sin(2.0 * np.pi * freq * t + phase)
        if patch.decay_mode == PLUCKED:
            # верхние гармоники щипка гаснут быстрее
            partial *= np.exp(-t * 0.15 * k / patch.decay_tau)
        tone += partial
    # самая громкая гармоника задаёт уровень тона относительно шума
    tone *= min(1.0, max(patch.partial_amplitudes)) / max(np.max(np.abs(tone)), 1e-12)

    signal = tone
    if patch.noise_level > 0:
        sos = butter(2, NOISE_BAND, btype="bandpass", fs=sample_rate, output="sos")
        noise = sosfilt(sos, rng.standard_normal(n_samples))
        noise /= max(np.sqrt(np.mean(noise ** 2)), 1e-12)
        signal = tone + patch.noise_level * noise

    signal = signal * note_envelope(patch, duration, n_samples, sample_rate)
    peak = np.max(np.abs(signal))
    if peak > 0:
        signal *= patch.peak_level / peak
    return AudioClip(signal.astype(np.float32), sample_rate)


def render_performance(notes: Sequence, seed: int = 0,
                       patches: Optional[Mapping[Technique, TechniquePatch]] = None,
                       total_duration: Optional[float] = None,
                       sample_rate: int = CANONICAL_RATE) -> AudioClip:
    """Монофоническое исполнение списка нот; каждая нота - своим патчем техники."""
    patches = patches or DEFAULT_PATCHES
    rendered = []
    end = 0
    for idx, note in enumerate(notes):
        patch = patches[Technique.parse(note.technique)]
        clip = render_note(int(note.pitch), note.offset - note.onset, patch, derive_seed(seed, idx), sample_rate)
        start = int(round(note.onset * sample_rate))
        rendered.append((start, clip.samples * (0.5 + 0.5 * note.velocity)))
        end = max(end, start + len(clip))

    n_samples = end if total_duration is None else int(round(total_duration * sample_rate))
    mix = np.zeros(n_samples)
    for start, samples in rendered:
        stop = min(n_samples, start + len(samples))
        if stop > start:
            mix[start:stop] += samples[: stop - start]

    peak = np.max(np.abs(mix)) if n_samples else 0.0
    if peak > HEADROOM:
        mix *= HEADROOM / peak
    return AudioClip(mix.astype(np.float32), sample_rate)
