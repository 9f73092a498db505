"""
Декодирование кадровых предсказаний в ноты с субкадровой точностью и присвоение техник.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import numpy as np

from annotations.notes import BEGIN_NOTE, PITCH_BINS
from annotations.technique import Technique
from audio.frontend import MelTensor
from common.errors import ContractError, ShapeError
from nets.articulation import WINDOW_FRAMES, make_note_window
from nets.transcription import FramePredictions

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoteEvent:
    pitch: int
    onset: float
    offset: float
    velocity: float = 0.5
    technique: Technique = Technique.NONE

    def __post_init__(self):
        if self.onset < 0:
            raise ContractError(f"onset {self.onset} is negative")
        if self.offset <= self.onset:
            raise ContractError(f"offset {self.offset} must be after onset {self.onset}")
        object.__setattr__(self, "technique", Technique.parse(self.technique))

    @property
    def duration(self) -> float:
        return self.offset - self.onset

    def to_dict(self) -> dict:
        return {
            "pitch": int(self.pitch),
            "onset": float(self.onset),
            "offset": float(self.offset),
            "velocity": float(self.velocity),
            "technique": self.technique.label,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NoteEvent":
        return cls(
            pitch=int(data["pitch"]),
            onset=float(data["onset"]),
            offset=float(data["offset"]),
            velocity=float(data.get("velocity", 0.5)),
            technique=Technique.parse(data.get("technique", Technique.NONE)),
        )


@dataclass(frozen=True)
class DecodeConfig:
    onset_threshold: float = 0.3
    offset_threshold: float = 0.3
    frame_threshold: float = 0.1
    min_duration: float = 0.03

    def __post_init__(self):
        for name in ("onset_threshold", "offset_threshold", "frame_threshold"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ContractError(f"{name} must be in (0, 1), got {value}")
        if self.min_duration <= 0:
            raise ContractError(f"min_duration must be positive, got {self.min_duration}")


def refine_peak(a: float, b: float, c: float) -> float:
    """Вершина параболы через три точки вокруг максимума b; результат в кадрах, [-0.5, 0.5]."""
    if b < a or b < c:
        raise ContractError(f"({a}, {b}, {c}) is not a local maximum at the centre")
    denom = a - 2.0 * b + c
    if denom == 0:
        return 0.0
    return float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))


def _neighbours(x: np.ndarray, n: int) -> Tuple[float, float]:
    # на краях отсутствующий сосед зеркалится
    left = x[n - 1] if n > 0 else x[n + 1] if len(x) > 1 else x[n]
    right = x[n + 1] if n + 1 < len(x) else left
    return float(left), float(right)


def find_peaks(x: np.ndarray, threshold: float) -> List[Tuple[int, float]]:
    """Локальные максимумы выше порога: x[n] > левого и >= правого. Возвращает (кадр, сдвиг)."""
    peaks = []
    for n in np.flatnonzero(x > threshold):
        left, right = _neighbours(x, n)
        centre = float(x[n])
        if centre > left and centre >= right:
            peaks.append((int(n), refine_peak(left, centre, right)))
        elif len(x) == 1:
            peaks.append((0, 0.0))
    return peaks


def _decode_pitch(pred: FramePredictions, p: int, config: DecodeConfig, dt: float) -> List[NoteEvent]:
    onset_col = pred.onset_reg[:, p]
    if not np.any(onset_col > config.onset_threshold):
        return []
    offset_col = pred.offset_reg[:, p]
    frame_col = pred.frame_act[:, p]
    end_time = (pred.n_frames - 1) * dt

    onsets = [(n, max(0.0, (n + d) * dt)) for n, d in find_peaks(onset_col, config.onset_threshold)]
    offsets = [(m, (m + d) * dt) for m, d in find_peaks(offset_col, config.offset_threshold)]
    silent = np.flatnonzero(frame_col < config.frame_threshold)

    events = []
    for i, (n, onset) in enumerate(onsets):
        candidates = [end_time]
        later_offsets = [t for m, t in offsets if m > n and t > onset]
        if later_offsets:
            candidates.append(later_offsets[0])
        later_silent = silent[silent > n]
        if len(later_silent):
            candidates.append(later_silent[0] * dt)
        if i + 1 < len(onsets):
            candidates.append(onsets[i + 1][1])
        offset = min(candidates)
        if offset - onset < config.min_duration:
            continue
        velocity = float(np.clip(pred.velocity[n, p], 0.0, 1.0))
        events.append(NoteEvent(BEGIN_NOTE + p, onset, offset, velocity))
    return events


def decode_notes(pred: FramePredictions, config: DecodeConfig = DecodeConfig(),
                 frame_period: float = 0.01) -> List[NoteEvent]:
    if frame_period <= 0:
        raise ContractError(f"frame period must be positive, got {frame_period}")
    events: List[NoteEvent] = []
    for p in range(PITCH_BINS):
        events.extend(_decode_pitch(pred, p, config, frame_period))
    events.sort(key=lambda e: (e.onset, e.pitch))
    logger.debug(f"Декодировано нот: {len(events)}")
    return events


def attach_techniques(notes: Sequence[NoteEvent], mel: MelTensor, pred: FramePredictions, classifier,
                      return_embeddings: bool = False):
    """Каждой ноте - метка техники по 2-секундному окну от её атаки; время и порядок не меняются."""
    if mel.n_frames != pred.n_frames:
        raise ShapeError(f"mel has {mel.n_frames} frames, predictions {pred.n_frames}")
    if not notes:
        result: List[NoteEvent] = []
        return (result, np.zeros((0, 0), dtype=np.float32)) if return_embeddings else result

    n_frames = getattr(classifier, "window_frames", WINDOW_FRAMES)
    windows = [make_note_window(mel, pred, note.onset, n_frames) for note in notes]
    labels, embeddings = classifier.classify(windows)
    labelled = [replace(note, technique=label) for note, label in zip(notes, labels)]
    if return_embeddings:
        return labelled, embeddings
    return labelled
