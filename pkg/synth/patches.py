"""
Параметрические патчи техник - акустические заменители переключателей артикуляций VST-скрипки.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

from common.errors import ContractError
from annotations.technique import Technique

SUSTAIN = "sustain"
EXPONENTIAL = "exponential"
PLUCKED = "plucked"
DECAY_MODES = {SUSTAIN, EXPONENTIAL, PLUCKED}


@dataclass(frozen=True)
class TechniquePatch:
    technique: Technique
    attack: float
    decay_mode: str
    decay_tau: float
    partial_amplitudes: Tuple[float, ...]
    noise_level: float = 0.0
    max_sound_duration: Optional[float] = None
    release: float = 0.08
    pitch_range: Tuple[int, int] = (55, 100)
    peak_level: float = 0.8

    def __post_init__(self):
        object.__setattr__(self, "partial_amplitudes", tuple(float(a) for a in self.partial_amplitudes))
        if self.attack < 0:
            raise ContractError(f"{self.technique.label}: attack must be >= 0")
        if self.decay_mode not in DECAY_MODES:
            raise ContractError(f"{self.technique.label}: unknown decay mode {self.decay_mode}")
        if any(a < 0 for a in self.partial_amplitudes) or not any(a > 0 for a in self.partial_amplitudes):
            raise ContractError(f"{self.technique.label}: partial amplitudes need one positive value")
        if self.decay_mode != SUSTAIN and self.decay_tau <= 0:
            raise ContractError(f"{self.technique.label}: decaying patch needs tau > 0")
        if not 0.0 <= self.noise_level <= 1.0:
            raise ContractError(f"{self.technique.label}: noise level outside [0, 1]")
        if not 0.0 < self.release <= 0.25:
            raise ContractError(f"{self.technique.label}: release tail must be in (0, 0.25] s")
        if not 0.0 < self.peak_level <= 0.99:
            raise ContractError(f"{self.technique.label}: peak level must be in (0, 0.99]")


def _bowed_series(n: int = 16, rolloff: float = 0.85) -> Tuple[float, ...]:
    # пилообразный спектр смычка с завалом ВЧ
    return tuple((rolloff ** k) / (k + 1) ** 0.5 for k in range(n))


DETACHE = TechniquePatch(
    technique=Technique.DETACHE,
    attack=0.04,
    decay_mode=SUSTAIN,
    decay_tau=1.0,
    partial_amplitudes=_bowed_series(),
    noise_level=0.02,
    release=0.08,
)

SPICCATO = TechniquePatch(
    technique=Technique.SPICCATO,
    attack=0.02,
    decay_mode=EXPONENTIAL,
    decay_tau=0.035,
    partial_amplitudes=_bowed_series(),
    noise_level=0.03,
    max_sound_duration=0.15,
    release=0.02,
)

PIZZICATO = TechniquePatch(
    technique=Technique.PIZZICATO,
    attack=0.002,
    decay_mode=PLUCKED,
    decay_tau=0.3,
    partial_amplitudes=tuple(0.9 ** k / (k + 1) for k in range(12)),
    noise_level=0.0,
    release=0.05,
)

FLAGEOLET = TechniquePatch(
    technique=Technique.FLAGEOLET,
    attack=0.12,
    decay_mode=SUSTAIN,
    decay_tau=1.0,
    partial_amplitudes=(1.0, 0.06, 0.025),
    noise_level=0.004,
    release=0.1,
)

# класс "без техники": только шум, по умолчанию не используется
NO_TECHNIQUE = TechniquePatch(
    technique=Technique.NONE,
    attack=0.01,
    decay_mode=SUSTAIN,
    decay_tau=1.0,
    partial_amplitudes=(1e-3,),
    noise_level=1.0,
    release=0.05,
    peak_level=0.1,
)

DEFAULT_PATCHES: Dict[Technique, TechniquePatch] = {
    Technique.DETACHE: DETACHE,
    Technique.FLAGEOLET: FLAGEOLET,
    Technique.SPICCATO: SPICCATO,
    Technique.PIZZICATO: PIZZICATO,
    Technique.NONE: NO_TECHNIQUE,
}
