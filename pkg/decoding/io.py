from pathlib import Path
from typing import List, Sequence, Union

from annotations.midi import load_midi, write_midi
from common.utils import read_jsonl, write_jsonl
from .notes import NoteEvent


def write_notes_jsonl(notes: Sequence[NoteEvent], path: Union[str, Path]) -> Path:
    write_jsonl(path, (n.to_dict() for n in notes))
    return Path(path)


def read_notes_jsonl(path: Union[str, Path]) -> List[NoteEvent]:
    return [NoteEvent.from_dict(r) for r in read_jsonl(path)]


def export_midi(notes: Sequence[NoteEvent], path: Union[str, Path]) -> Path:
    write_midi(notes, path)
    return Path(path)


def read_notes(path: Union[str, Path]) -> List[NoteEvent]:
    """Ноты из .jsonl или MIDI - по расширению."""
    path = Path(path)
    if path.suffix.lower() in (".jsonl", ".json"):
        return read_notes_jsonl(path)
    return [NoteEvent(n.pitch, n.onset, n.offset, n.velocity, n.technique) for n in load_midi(path)]
