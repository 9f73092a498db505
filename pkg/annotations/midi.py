"""
Чтение/запись стандартных MIDI-файлов с техникой исполнения в текстовых маркерах.

Соглашение: мета-событие marker/text/cue_marker с текстом "tech:<name>" задаёт технику
для всех последующих нот (до следующего маркера). Без маркера нота получает `none`.
"""

import logging
from bisect import bisect_right
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import mido

from common.errors import MidiParseError
from .notes import BEGIN_NOTE, END_NOTE, NoteAnnotation
from .technique import Technique

logger = logging.getLogger(__name__)

DEFAULT_TEMPO = 500000  # мкс на долю = 120 bpm
WRITE_TICKS_PER_BEAT = 960
MARKER_PREFIX = "tech:"
MARKER_TYPES = {"marker", "text", "cue_marker"}

# порядок обработки событий в один тик
_ORDER_META = 0
_ORDER_OFF = 1
_ORDER_ON = 2


class TempoMap:
    """Кусочно-постоянный темп: тик -> секунды."""

    def __init__(self, ticks_per_beat: int, changes: Sequence[Tuple[int, int]] = ()):
        self.ticks_per_beat = ticks_per_beat
        points: Dict[int, int] = {0: DEFAULT_TEMPO}
        for tick, tempo in sorted(changes):
            points[tick] = tempo
        self._ticks = sorted(points)
        self._tempos = [points[t] for t in self._ticks]
        self._seconds = [0.0]
        for i in range(1, len(self._ticks)):
            span = self._ticks[i] - self._ticks[i - 1]
            self._seconds.append(
                self._seconds[-1] + mido.tick2second(span, ticks_per_beat, self._tempos[i - 1])
            )

    def seconds(self, tick: int) -> float:
        i = bisect_right(self._ticks, tick) - 1
        return self._seconds[i] + mido.tick2second(tick - self._ticks[i], self.ticks_per_beat, self._tempos[i])


def _parse_marker(text: str) -> Optional[Technique]:
    text = text.strip()
    if not text.lower().startswith(MARKER_PREFIX):
        return None
    name = text[len(MARKER_PREFIX):]
    try:
        return Technique.parse(name)
    except ValueError:
        logger.warning(f"Неизвестная техника в маркере '{text}', маркер пропущен")
        return None


def _read_file(path: Path) -> mido.MidiFile:
    with path.open("rb") as fh:
        try:
            return mido.MidiFile(file=fh)
        except Exception as e:
            raise MidiParseError(path, fh.tell(), str(e) or type(e).__name__)


def load_midi(path: Union[str, Path]) -> List[NoteAnnotation]:
    path = Path(path)
    try:
        midi = _read_file(path)
    except OSError as e:
        raise MidiParseError(path, 0, f"cannot open file ({e})")

    if midi.type not in (0, 1):
        raise MidiParseError(path, 0, f"MIDI format {midi.type} is not supported")

    events = []
    track_end: Dict[int, int] = {}
    tempo_changes = []

    for track_idx, track in enumerate(midi.tracks):
        tick = 0
        for msg in track:
            tick += msg.time
            if msg.type == "set_tempo":
                tempo_changes.append((tick, msg.tempo))
                continue
            if msg.type in MARKER_TYPES:
                events.append((tick, _ORDER_META, track_idx, msg))
            elif msg.type == "note_on" and msg.velocity > 0:
                events.append((tick, _ORDER_ON, track_idx, msg))
            elif msg.type == "note_off" or (msg.type == "note_on" and msg.velocity == 0):
                events.append((tick, _ORDER_OFF, track_idx, msg))
        track_end[track_idx] = tick

    tempo_map = TempoMap(midi.ticks_per_beat, tempo_changes)
    events.sort(key=lambda e: (e[0], e[1], e[2]))

    technique = Technique.NONE
    pending: Dict[Tuple[int, int], List[Tuple[int, int, Technique, int]]] = defaultdict(list)
    raw_notes: List[Tuple[int, int, int, int, Technique]] = []

    for tick, order, track_idx, msg in events:
        if order == _ORDER_META:
            parsed = _parse_marker(msg.text)
            if parsed is not None:
                technique = parsed
        elif order == _ORDER_ON:
            pending[(msg.channel, msg.note)].append((tick, msg.velocity, technique, track_idx))
        else:
            stack = pending.get((msg.channel, msg.note))
            if not stack:
                logger.debug(f"{path.name}: note_off без note_on (нота {msg.note}, тик {tick})")
                continue
            on_tick, velocity, tech, _ = stack.pop(0)
            raw_notes.append((msg.note, on_tick, tick, velocity, tech))

    for (channel, note), stack in pending.items():
        for on_tick, velocity, tech, track_idx in stack:
            end = track_end[track_idx]
            logger.warning(
                f"{path.name}: незакрытая нота {note} (канал {channel}, тик {on_tick}) закрыта в конце трека"
            )
            raw_notes.append((note, on_tick, end, velocity, tech))

    notes = []
    for pitch, on_tick, off_tick, velocity, tech in raw_notes:
        if not BEGIN_NOTE <= pitch <= END_NOTE:
            logger.warning(f"{path.name}: нота {pitch} вне диапазона {BEGIN_NOTE}..{END_NOTE}, пропущена")
            continue
        onset = tempo_map.seconds(on_tick)
        offset = tempo_map.seconds(off_tick)
        if offset <= onset:
            logger.warning(f"{path.name}: нота {pitch} нулевой длительности на {onset:.3f} c, пропущена")
            continue
        notes.append(NoteAnnotation(pitch, onset, offset, velocity / 127.0, tech))

    notes.sort(key=lambda n: (n.onset, n.pitch))
    return notes


def write_midi(notes: Sequence, path: Union[str, Path], tempo: int = DEFAULT_TEMPO,
               ticks_per_beat: int = WRITE_TICKS_PER_BEAT):
    """Записывает ноты (любые объекты с pitch/onset/offset/velocity/technique) в MIDI формата 0."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def to_tick(seconds: float) -> int:
        return int(round(mido.second2tick(seconds, ticks_per_beat, tempo)))

    timed = []
    current: Optional[Technique] = None
    for note in sorted(notes, key=lambda n: (n.onset, n.pitch)):
        tech = Technique.parse(note.technique)
        on_tick = to_tick(note.onset)
        off_tick = max(on_tick + 1, to_tick(note.offset))
        velocity = min(127, max(1, int(round(note.velocity * 127))))
        if tech != current:
            timed.append((on_tick, 1, mido.MetaMessage("marker", text=f"{MARKER_PREFIX}{tech.label}")))
            current = tech
        timed.append((on_tick, 2, mido.Message("note_on", note=int(note.pitch), velocity=velocity, channel=0)))
        timed.append((off_tick, 0, mido.Message("note_off", note=int(note.pitch), velocity=0, channel=0)))

    timed.sort(key=lambda e: (e[0], e[1]))

    track = mido.MidiTrack()
    track.append(mido.MetaMessage("set_tempo", tempo=tempo, time=0))
    last = 0
    for tick, _, msg in timed:
        track.append(msg.copy(time=tick - last))
        last = tick
    track.append(mido.MetaMessage("end_of_track", time=0))

    midi = mido.MidiFile(type=0, ticks_per_beat=ticks_per_beat)
    midi.tracks.append(track)
    midi.save(str(path))
