from dataclasses import dataclass, replace
from typing import List, Sequence

from common.errors import AnnotationError
from .technique import Technique

BEGIN_NOTE = 21
END_NOTE = 108
PITCH_BINS = END_NOTE - BEGIN_NOTE + 1


@dataclass(frozen=True)
class NoteAnnotation:
    pitch: int
    onset: float
    offset: float
    velocity: float = 0.5
    technique: Technique = Technique.NONE

    def __post_init__(self):
        if not BEGIN_NOTE <= self.pitch <= END_NOTE:
            raise AnnotationError(f"pitch {self.pitch} outside MIDI {BEGIN_NOTE}..{END_NOTE}")
        if self.onset < 0:
            raise AnnotationError(f"onset {self.onset} is negative")
        if self.offset <= self.onset:
            raise AnnotationError(f"offset {self.offset} must be after onset {self.onset}")
        if not 0.0 <= self.velocity <= 1.0:
            raise AnnotationError(f"velocity {self.velocity} outside [0, 1]")
        object.__setattr__(self, "technique", Technique.parse(self.technique))

    @property
    def duration(self) -> float:
        return self.offset - self.onset


def clip_notes(notes: Sequence[NoteAnnotation], start: float, duration: float) -> List[NoteAnnotation]:
    """Переводит ноты во время сегмента [start, start + duration).

    Ноты с атакой вне сегмента отбрасываются, окончания обрезаются по концу сегмента.
    """
    end = start + duration
    clipped = []
    for note in notes:
        if note.onset < start or note.onset >= end:
            continue
        onset = note.onset - start
        offset = min(note.offset, end) - start
        if offset <= onset:
            continue
        clipped.append(replace(note, onset=onset, offset=offset))
    return clipped
