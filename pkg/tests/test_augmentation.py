import numpy as np
import pytest

from audio.augmentation import (
    EffectChainConfig,
    apply_gain,
    augment,
    bandpass,
    pitch_shift,
    reverb,
    soft_clip,
)
from audio.frontend import AudioClip
from common.errors import ContractError
from helpers import RATE, fft_peak_hz, rms, sine

ONLY_PITCH = EffectChainConfig(use_gain=False, use_bandpass=False, use_reverb=False)
ONLY_GAIN = EffectChainConfig(use_pitch_shift=False, use_bandpass=False, use_reverb=False)


def test_disabled_chain_is_identity(sine_clip):
    clip = sine_clip()
    out = augment(clip, EffectChainConfig(enabled=False), seed=3)
    assert np.array_equal(out.samples, clip.samples)


def test_gain_stage_alone(sine_clip):
    out = augment(sine_clip(440.0, 0.5, 0.1), ONLY_GAIN, seed=0)
    assert np.max(np.abs(out.samples)) == pytest.approx(0.1 * 10 ** 0.25, abs=1e-3)
    assert apply_gain(np.array([1.0]), 5.0)[0] == pytest.approx(10 ** 0.25, abs=1e-12)


def test_pitch_shift_moves_sine_peak():
    shifted = pitch_shift(sine(440.0, 2.0, 0.5).astype(np.float64), RATE, 0.1)
    assert fft_peak_hz(shifted[RATE // 4:-RATE // 4]) == pytest.approx(440.0 * 2 ** (0.1 / 12), abs=1.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_chain_preserves_length_and_range(sine_clip, seed):
    clip = sine_clip(330.0, 1.3, 0.9)
    for config in (EffectChainConfig(), ONLY_PITCH, ONLY_GAIN):
        out = augment(clip, config, seed)
        assert len(out) == len(clip)
        assert np.max(np.abs(out.samples)) <= 1.0


def test_chain_is_deterministic_per_seed(sine_clip):
    clip = sine_clip(660.0, 0.6)
    a = augment(clip, EffectChainConfig(), seed=11)
    b = augment(clip, EffectChainConfig(), seed=11)
    c = augment(clip, EffectChainConfig(), seed=12)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_soft_clip_is_linear_below_knee_and_bounded():
    x = np.linspace(-0.9, 0.9, 181)
    assert np.array_equal(soft_clip(x), x)
    assert 0.9 < soft_clip(np.array([0.95]))[0] < 0.95

    y = soft_clip(np.linspace(-20.0, 20.0, 4001))
    assert np.all(np.abs(y) <= 1.0)
    assert np.all(np.diff(y) >= 0)


def test_bandpass_passes_centre_frequency():
    tone = sine(500.0, 1.0, 0.5).astype(np.float64)
    out = bandpass(tone, RATE, center=500.0, q=0.5)
    assert rms(out[RATE // 2:]) == pytest.approx(rms(tone[RATE // 2:]), rel=0.05)


@pytest.mark.parametrize("center", [100.0, 300.0, 600.0])
@pytest.mark.parametrize("q", [0.5, 0.8, 1.0, 1.4, 2.0])
def test_bandpass_attenuates_two_octaves_above_upper_edge(center, q):
    impulse = np.zeros(2 ** 16)
    impulse[0] = 1.0
    response = np.abs(np.fft.rfft(bandpass(impulse, RATE, center, q)))
    freqs = np.fft.rfftfreq(len(impulse), 1.0 / RATE)
    upper_edge = freqs[np.argmax((freqs > center) & (response < 1 / np.sqrt(2)))]
    far = 4 * upper_edge
    assert center < upper_edge and far < RATE / 2

    tone = sine(far, 1.0, 0.5).astype(np.float64)
    out = bandpass(tone, RATE, center, q)

    # второй порядок: не меньше ~13.8 дБ при Q = 0.5, с ростом Q больше
    attenuation_db = 20 * np.log10(rms(out[RATE // 2:]) / rms(tone[RATE // 2:]))
    assert attenuation_db <= -13.5


def test_reverb_adds_a_tail_and_dry_mix_is_identity():
    impulse = np.zeros(RATE)
    impulse[0] = 1.0

    wet = reverb(impulse, RATE, room_size=0.35, wet=0.3)
    dry = reverb(impulse, RATE, room_size=0.35, wet=0.0)

    assert len(wet) == len(impulse)
    assert rms(wet[RATE // 20:]) > 0
    assert np.array_equal(dry, impulse)


def test_rate_mismatch():
    with pytest.raises(ContractError):
        augment(AudioClip(np.zeros(800), 8000), EffectChainConfig())


@pytest.mark.parametrize("kwargs", [
    {"cutoff_range": (0.0, 4096.0)},
    {"cutoff_range": (32.0, 9000.0)},
    {"resonance_range": (0.0, 2.0)},
    {"reverb_room_size": 1.5},
])
def test_config_validation(kwargs):
    with pytest.raises(ContractError):
        EffectChainConfig(**kwargs)
