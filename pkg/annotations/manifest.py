"""
Манифест датасета: по строке на запись (аудио, разметка, пьеса, исполнитель, сплит, фолд, техника).
Формат - TSV с заголовком, пути относительно каталога манифеста.
"""

import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Union

import pandas as pd

from common.errors import AnnotationError
from common.utils import resolve_path
from .technique import Technique

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ["audio_path", "annotation_path", "piece_id", "performer_id"]
OPTIONAL_COLUMNS = ["split", "fold", "technique"]


@dataclass(frozen=True)
class ManifestRecord:
    audio_path: Path
    annotation_path: Path
    piece_id: str
    performer_id: str
    split: str = ""
    fold: int = -1
    technique: Optional[Technique] = None

    @property
    def key(self) -> str:
        return f"{self.piece_id}/{self.performer_id}"


class DatasetManifest:
    """Неизменяемый снимок записей."""

    def __init__(self, records: Iterable[ManifestRecord], root: Optional[Path] = None):
        self.records = tuple(records)
        self.root = Path(root) if root is not None else None
        seen = set()
        for record in self.records:
            key = (record.piece_id, record.performer_id)
            if key in seen:
                raise AnnotationError(f"duplicate manifest entry for piece {record.piece_id}, performer {record.performer_id}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ManifestRecord]:
        return iter(self.records)

    def __getitem__(self, idx: int) -> ManifestRecord:
        return self.records[idx]

    @property
    def pieces(self) -> List[str]:
        return sorted({r.piece_id for r in self.records})

    def subset(self, records: Iterable[ManifestRecord]) -> "DatasetManifest":
        return DatasetManifest(records, self.root)

    def with_split(self, split: str) -> "DatasetManifest":
        return self.subset(replace(r, split=split) for r in self.records)

    def filter_pieces(self, piece_ids: Sequence[str]) -> "DatasetManifest":
        wanted = set(piece_ids)
        return self.subset(r for r in self.records if r.piece_id in wanted)

    def to_frame(self, relative_to: Optional[Path] = None) -> pd.DataFrame:
        rows = []
        for record in self.records:
            row = asdict(record)
            for key in ("audio_path", "annotation_path"):
                row[key] = _relative(Path(row[key]), relative_to)
            row["technique"] = record.technique.label if record.technique is not None else ""
            rows.append(row)
        columns = [f.name for f in fields(ManifestRecord)]
        return pd.DataFrame(rows, columns=columns)

    def save(self, path: Union[str, Path]):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = self.to_frame(relative_to=path.parent.resolve())
        frame.to_csv(path, sep="\t", index=False, lineterminator="\n")
        logger.info(f"Манифест сохранён: {path} ({len(self)} записей)")

    @classmethod
    def load(cls, path: Union[str, Path], check_paths: bool = True) -> "DatasetManifest":
        path = Path(path)
        if not path.exists():
            raise AnnotationError(f"manifest not found: {path}")
        try:
            frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False)
        except Exception as e:
            raise AnnotationError(f"{path}: unreadable manifest ({e})")

        missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
        if missing:
            raise AnnotationError(f"{path}: manifest lacks columns {missing}")
        extra = [c for c in frame.columns if c not in REQUIRED_COLUMNS + OPTIONAL_COLUMNS]
        if extra:
            logger.warning(f"{path.name}: лишние колонки {extra} проигнорированы")

        root = path.parent.resolve()
        records = []
        for row in frame.to_dict(orient="records"):
            record = ManifestRecord(
                audio_path=resolve_path(row["audio_path"], root),
                annotation_path=resolve_path(row["annotation_path"], root),
                piece_id=row["piece_id"],
                performer_id=row["performer_id"],
                split=row.get("split", ""),
                fold=int(row["fold"]) if row.get("fold", "") not in ("", None) else -1,
                technique=Technique.parse(row["technique"]) if row.get("technique") else None,
            )
            if check_paths:
                for p in (record.audio_path, record.annotation_path):
                    if not p.exists():
                        raise AnnotationError(f"{path}: missing file {p} (piece {record.piece_id})")
            records.append(record)
        return cls(records, root)


def _relative(path: Path, root: Optional[Path]) -> str:
    if root is None:
        return str(path)
    try:
        return os.path.relpath(Path(path).resolve(), root)
    except ValueError:
        return str(path)


def records_by_technique(manifest: DatasetManifest) -> Dict[Optional[Technique], List[ManifestRecord]]:
    groups: Dict[Optional[Technique], List[ManifestRecord]] = {}
    for record in manifest:
        groups.setdefault(record.technique, []).append(record)
    return groups
