import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from common.errors import AnnotationError, ContractError
from .notes import BEGIN_NOTE, PITCH_BINS

DEFAULT_J = 5
_EPS = 1e-9


@dataclass
class TargetRolls:
    frame: np.ndarray       # (T, 88) {0, 1}
    onset_reg: np.ndarray   # (T, 88) [0, 1]
    offset_reg: np.ndarray  # (T, 88) [0, 1]
    velocity: np.ndarray    # (T, 88) [0, 1]

    @property
    def n_frames(self) -> int:
        return self.frame.shape[0]

    def stack(self) -> np.ndarray:
        return np.stack([self.frame, self.onset_reg, self.offset_reg, self.velocity])


def _triangle(roll: np.ndarray, pitch_idx: int, event_time: float, frame_period: float,
              J: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Вписывает треугольник полуширины J кадров (поэлементный max).

    Возвращает (кадры, значения треугольника, прежние значения roll на этих кадрах).
    """
    n_frames = roll.shape[0]
    center = event_time / frame_period
    lo = max(0, int(math.floor(center)) - J)
    hi = min(n_frames, int(math.ceil(center)) + J + 1)
    frames = np.arange(lo, hi)
    values = np.clip(1.0 - np.abs(frames * frame_period - event_time) / (J * frame_period), 0.0, 1.0)
    previous = roll[lo:hi, pitch_idx].copy()
    roll[lo:hi, pitch_idx] = np.maximum(previous, values)
    return frames, values, previous


def generate_targets(notes: Sequence, n_frames: int, frame_period: float, J: int = DEFAULT_J,
                     constant_velocity: Optional[float] = None) -> TargetRolls:
    if n_frames <= 0:
        raise ContractError(f"frame count must be positive, got {n_frames}")
    if J < 1:
        raise ContractError(f"regression half-width J must be >= 1, got {J}")

    span = n_frames * frame_period
    outside = [n for n in notes if n.onset < 0 or n.onset >= span or n.offset > span + _EPS]
    if outside:
        listed = ", ".join(f"(pitch {n.pitch}, {n.onset:.3f}-{n.offset:.3f} s)" for n in outside[:5])
        raise AnnotationError(f"{len(outside)} note(s) outside [0, {span:.3f}) s: {listed}")

    shape = (n_frames, PITCH_BINS)
    frame = np.zeros(shape, dtype=np.float32)
    onset_reg = np.zeros(shape, dtype=np.float32)
    offset_reg = np.zeros(shape, dtype=np.float32)
    velocity = np.zeros(shape, dtype=np.float32)

    for note in notes:
        p = note.pitch - BEGIN_NOTE
        # кадр t звучит, если onset <= t*dt < offset
        start = max(0, int(math.ceil(note.onset / frame_period - _EPS)))
        stop = min(n_frames, int(math.ceil(note.offset / frame_period - _EPS)))
        frame[start:stop, p] = 1.0

        frames, values, before = _triangle(onset_reg, p, note.onset, frame_period, J)
        vel = note.velocity if constant_velocity is None else constant_velocity
        won = (values > 0) & (values >= before)
        velocity[frames[won], p] = vel

        _triangle(offset_reg, p, note.offset, frame_period, J)

    return TargetRolls(frame, onset_reg, offset_reg, velocity)
