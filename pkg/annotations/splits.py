import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from common.errors import SplitError
from .manifest import DatasetManifest, records_by_technique

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FoldAssignment:
    rotation: int
    test: DatasetManifest
    validation: DatasetManifest


def make_split(manifest: DatasetManifest, held_out_piece: str) -> Tuple[DatasetManifest, DatasetManifest]:
    """Все исполнения отложенной пьесы уходят в валидацию, остальное - в обучение."""
    pieces = manifest.pieces
    if held_out_piece not in pieces:
        raise SplitError(f"piece '{held_out_piece}' is not in the manifest")
    train = manifest.filter_pieces([p for p in pieces if p != held_out_piece]).with_split("train")
    val = manifest.filter_pieces([held_out_piece]).with_split("validation")
    logger.info(f"Сплит: train={len(train)}, validation={len(val)} (пьеса {held_out_piece})")
    return train, val


def assign_folds(manifest: DatasetManifest, k: int, seed: int = 0) -> DatasetManifest:
    """Разбиение на k фолдов, сбалансированное по технике (разница в счётчиках <= 1)."""
    if k < 2:
        raise SplitError(f"k must be >= 2, got {k}")
    if k > len(manifest):
        raise SplitError(f"cannot make {k} folds from {len(manifest)} records")

    rng = np.random.default_rng(seed)
    groups = records_by_technique(manifest)
    fold_of = {}
    counter = 0
    # сквозной счётчик между группами выравнивает и общие размеры фолдов
    for technique in sorted(groups, key=lambda t: -1 if t is None else int(t)):
        members = sorted(groups[technique], key=lambda r: r.key)
        for idx in rng.permutation(len(members)):
            fold_of[members[idx].key] = counter % k
            counter += 1

    return manifest.subset(replace(r, fold=fold_of[r.key]) for r in manifest)


def kfold(manifest: DatasetManifest, k: int, seed: int = 0) -> List[FoldAssignment]:
    folded = assign_folds(manifest, k, seed)
    rotations = []
    for i in range(k):
        test = folded.subset(r for r in folded if r.fold == i).with_split("test")
        val = folded.subset(r for r in folded if r.fold != i).with_split("validation")
        rotations.append(FoldAssignment(i, test, val))
    return rotations


def write_assignments(out_dir: Union[str, Path], **manifests: DatasetManifest) -> List[Path]:
    out_dir = Path(out_dir)
    written = []
    for name, manifest in manifests.items():
        path = out_dir / f"{name}.tsv"
        manifest.save(path)
        written.append(path)
    return written
