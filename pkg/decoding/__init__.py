from .notes import DecodeConfig, NoteEvent, attach_techniques, decode_notes, find_peaks, refine_peak
from .io import export_midi, read_notes, read_notes_jsonl, write_notes_jsonl
from .pipeline import Transcriber, TranscriptionResult
