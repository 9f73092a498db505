"""
Сборка синтетического корпуса техник: одиночные ноты WAV+MIDI, поровну на каждую технику,
и 10-секундные гаммы для обучения/оценки транскрипции.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from annotations.manifest import DatasetManifest, ManifestRecord
from annotations.midi import write_midi
from annotations.notes import NoteAnnotation
from annotations.technique import PLAYED_TECHNIQUES, Technique
from common.errors import ContractError, CorpusBuildError
from common.utils import DEFAULT_WORKERS, derive_seed
from .renderers import BuiltinRenderer, Renderer, RenderJob

logger = logging.getLogger(__name__)

LEAD_IN = 0.1
MANIFEST_NAME = "manifest.tsv"
MAX_RELEASE = 0.25
MAJOR_STEPS = (2, 2, 1, 2, 2, 2, 1)


@dataclass(frozen=True)
class CorpusSpec:
    notes_per_technique: int = 50
    pitch_range: Tuple[int, int] = (55, 100)
    duration_range: Tuple[float, float] = (0.3, 2.0)
    velocity: float = 0.8
    seed: int = 0
    output_rate: int = 16000
    include_no_technique: bool = False

    def __post_init__(self):
        object.__setattr__(self, "pitch_range", tuple(int(p) for p in self.pitch_range))
        object.__setattr__(self, "duration_range", tuple(float(d) for d in self.duration_range))
        if self.notes_per_technique < 1:
            raise ContractError("notes_per_technique must be >= 1")
        lo, hi = self.pitch_range
        if not 55 <= lo <= hi <= 100:
            raise ContractError(f"pitch range {self.pitch_range} must lie within 55..100")
        d0, d1 = self.duration_range
        if not 0 < d0 <= d1:
            raise ContractError(f"bad duration range {self.duration_range}")
        if self.output_rate != 16000:
            raise ContractError("corpus audio is always 16 kHz")

    @property
    def techniques(self) -> List[Technique]:
        techniques = list(PLAYED_TECHNIQUES)
        if self.include_no_technique:
            techniques.append(Technique.NONE)
        return techniques


@dataclass
class CorpusItem:
    stem: str
    technique: Optional[Technique]
    notes: List[NoteAnnotation]
    seed: int
    piece_id: str = ""
    performer_id: str = ""


def plan_corpus(spec: CorpusSpec) -> List[CorpusItem]:
    """Детерминированный план: у каждой ноты свой сид, независимый от порядка выполнения."""
    items = []
    lo, hi = spec.pitch_range
    d0, d1 = spec.duration_range
    for technique in spec.techniques:
        for index in range(spec.notes_per_technique):
            item_seed = derive_seed(spec.seed, int(technique), index)
            rng = np.random.default_rng(item_seed)
            pitch = int(rng.integers(lo, hi + 1))
            duration = float(rng.uniform(d0, d1))
            note = NoteAnnotation(pitch, LEAD_IN, LEAD_IN + duration, spec.velocity, technique)
            stem = f"{technique.label}_{pitch:03d}_{index:05d}"
            items.append(CorpusItem(stem, technique, [note], item_seed, piece_id=stem))
    return items


def _render_item(item: CorpusItem, out_dir: Path, renderer: Renderer) -> Dict:
    midi_path = out_dir / "midi" / f"{item.stem}.mid"
    wav_path = out_dir / "audio" / f"{item.stem}.wav"
    try:
        write_midi(item.notes, midi_path)
        techniques = sorted({n.technique for n in item.notes})
        job = RenderJob(item.stem, midi_path, techniques, wav_path, notes=item.notes, seed=item.seed)
        renderer.render(job)
        record = ManifestRecord(
            audio_path=wav_path,
            annotation_path=midi_path,
            piece_id=item.piece_id or item.stem,
            performer_id=item.performer_id or renderer.name,
            technique=item.technique,
        )
        return {"success": True, "message": "ok", "record": record}
    except Exception as e:
        logger.error(f"❌ Ошибка рендера '{item.stem}': {e}")
        return {"success": False, "message": f"{item.stem}: {e}", "stem": item.stem}


def _build(items: List[CorpusItem], out_dir: Union[str, Path], renderer: Optional[Renderer],
           workers: int, desc: str) -> DatasetManifest:
    out_dir = Path(out_dir)
    renderer = renderer or BuiltinRenderer()
    renderer.check()
    out_dir.mkdir(parents=True, exist_ok=True)

    workers = max(1, workers)
    if workers == 1:
        results = [_render_item(item, out_dir, renderer) for item in tqdm(items, desc=desc)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(tqdm(pool.map(lambda it: _render_item(it, out_dir, renderer), items),
                                total=len(items), desc=desc))

    failures = [r for r in results if not r["success"]]
    if failures:
        # манифест не пишется, пока хоть одна позиция не собрана
        raise CorpusBuildError(failures)

    manifest = DatasetManifest([r["record"] for r in results], out_dir)
    manifest.save(out_dir / MANIFEST_NAME)
    logger.info(f"✅ Корпус собран: {len(manifest)} записей в {out_dir}")
    return manifest


def build_corpus(spec: CorpusSpec, out_dir: Union[str, Path], renderer: Optional[Renderer] = None,
                 workers: int = DEFAULT_WORKERS) -> DatasetManifest:
    items = plan_corpus(spec)
    counts = {t.label: spec.notes_per_technique for t in spec.techniques}
    logger.info(f"План корпуса: {counts}, seed={spec.seed}")
    return _build(items, out_dir, renderer, workers, "synth-corpus")


@dataclass(frozen=True)
class ScaleSpec:
    pieces: int = 4
    performers: int = 2
    duration: float = 10.0
    note_duration_range: Tuple[float, float] = (0.25, 0.6)
    gap_range: Tuple[float, float] = (0.1, 0.2)
    root_range: Tuple[int, int] = (55, 76)
    technique: Optional[Technique] = None
    techniques: Tuple[Technique, ...] = field(default_factory=lambda: tuple(PLAYED_TECHNIQUES))
    velocity: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.technique is not None:
            object.__setattr__(self, "technique", Technique.parse(self.technique))
        object.__setattr__(self, "techniques", tuple(Technique.parse(t) for t in self.techniques))
        if self.pieces < 1 or self.performers < 1:
            raise ContractError("scale corpus needs at least one piece and one performer")
        if self.duration <= LEAD_IN + MAX_RELEASE + self.note_duration_range[1]:
            raise ContractError(f"scale duration {self.duration} s too short")
        if self.root_range[1] + 24 > 100 or self.root_range[0] < 55:
            raise ContractError(f"scale roots {self.root_range} leave the violin range")


def _scale_pitches(root: int) -> List[int]:
    up = [root]
    for step in MAJOR_STEPS * 2:
        up.append(up[-1] + step)
    return up + up[-2::-1]


def plan_scales(spec: ScaleSpec) -> List[CorpusItem]:
    """Пьеса = мажорная гамма на две октавы вверх-вниз; исполнители различаются темпом и артикуляцией."""
    items = []
    for piece in range(spec.pieces):
        root = int(np.random.default_rng(derive_seed(spec.seed, piece)).integers(
            spec.root_range[0], spec.root_range[1] + 1))
        pitches = _scale_pitches(root)
        for performer in range(spec.performers):
            item_seed = derive_seed(spec.seed, piece, performer, 1)
            rng = np.random.default_rng(item_seed)
            notes = []
            t = LEAD_IN
            limit = spec.duration - MAX_RELEASE
            idx = 0
            while True:
                length = float(rng.uniform(*spec.note_duration_range))
                gap = float(rng.uniform(*spec.gap_range))
                technique = spec.technique if spec.technique is not None else \
                    spec.techniques[int(rng.integers(len(spec.techniques)))]
                if t + length > limit:
                    break
                notes.append(NoteAnnotation(pitches[idx % len(pitches)], t, t + length, spec.velocity, technique))
                t += length + gap
                idx += 1
            piece_id = f"scale_{piece:02d}"
            items.append(CorpusItem(
                stem=f"{piece_id}_p{performer}",
                technique=spec.technique,
                notes=notes,
                seed=item_seed,
                piece_id=piece_id,
                performer_id=f"performer_{performer}",
            ))
    return items


def build_scale_corpus(spec: ScaleSpec, out_dir: Union[str, Path], renderer: Optional[Renderer] = None,
                       workers: int = DEFAULT_WORKERS) -> DatasetManifest:
    items = plan_scales(spec)
    logger.info(f"План гамм: {spec.pieces} пьес x {spec.performers} исполнителей, seed={spec.seed}")
    return _build(items, out_dir, renderer, workers, "synth-scales")
