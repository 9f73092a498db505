"""
Нотные метрики транскрипции (P/R/F1 с офсетом и без) и метрики классификации техник.
Сопоставление нот - максимальное паросочетание (scipy) по точной матрице допустимых пар.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from annotations.technique import NUM_TECHNIQUES, Technique
from common.errors import ContractError

logger = logging.getLogger(__name__)

# погрешность float при сравнении с границей допуска (1.05 - 1.0 > 0.05 в двоичной арифметике)
FLOAT_SLACK = 1e-9


@dataclass(frozen=True)
class ToleranceSpec:
    pitch_tol: float = 50.0        # центы
    onset_tol: float = 0.05
    offset_ratio: float = 0.2
    offset_min_tol: float = 0.05
    with_offset: bool = True

    def __post_init__(self):
        for name in ("pitch_tol", "onset_tol", "offset_ratio", "offset_min_tol"):
            if getattr(self, name) <= 0:
                raise ContractError(f"tolerance {name} must be positive")


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    f1_no_offset: float
    precision_no_offset: float = 0.0
    recall_no_offset: float = 0.0
    n_ref: int = 0
    n_est: int = 0
    matched: List[Tuple[int, int]] = field(default_factory=list)

    def to_row(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "precision_no_offset": self.precision_no_offset,
            "recall_no_offset": self.recall_no_offset,
            "f1_no_offset": self.f1_no_offset,
            "n_ref": self.n_ref,
            "n_est": self.n_est,
        }


@dataclass
class TechniqueReport:
    macro_accuracy: float
    per_class_accuracy: List[float]   # NaN там, где у класса нет примеров
    confusion: np.ndarray             # (5, 5), строка - истинный класс

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=1)


def _admissible(ref: Sequence, est: Sequence, tol: ToleranceSpec) -> np.ndarray:
    """Матрица допустимых пар (ref x est): точные сравнения с запасом FLOAT_SLACK на округление."""
    ref_pitch = np.array([n.pitch for n in ref], dtype=float)[:, None]
    est_pitch = np.array([n.pitch for n in est], dtype=float)[None, :]
    ref_on = np.array([n.onset for n in ref], dtype=float)[:, None]
    est_on = np.array([n.onset for n in est], dtype=float)[None, :]

    ok = 100.0 * np.abs(est_pitch - ref_pitch) <= tol.pitch_tol + FLOAT_SLACK
    ok &= np.abs(est_on - ref_on) <= tol.onset_tol + FLOAT_SLACK
    if tol.with_offset:
        ref_off = np.array([n.offset for n in ref], dtype=float)[:, None]
        est_off = np.array([n.offset for n in est], dtype=float)[None, :]
        allowed = np.maximum(tol.offset_ratio * (ref_off - ref_on), tol.offset_min_tol)
        ok &= np.abs(est_off - ref_off) <= allowed + FLOAT_SLACK
    return ok


def match_notes(ref: Sequence, est: Sequence, tol: ToleranceSpec = ToleranceSpec()) -> List[Tuple[int, int]]:
    """Пары (индекс ref, индекс est) максимального паросочетания по допустимым парам."""
    if not ref or not est:
        return []
    graph = csr_matrix(_admissible(ref, est, tol).astype(np.int8))
    to_est = maximum_bipartite_matching(graph, perm_type="column")
    return [(i, int(j)) for i, j in enumerate(to_est) if j >= 0]


def _prf(n_matched: int, n_ref: int, n_est: int) -> Tuple[float, float, float]:
    precision = n_matched / n_est if n_est else 0.0
    recall = n_matched / n_ref if n_ref else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def note_metrics(ref: Sequence, est: Sequence, tol: ToleranceSpec = ToleranceSpec()) -> EvalReport:
    matched = match_notes(ref, est, tol)
    precision, recall, f1 = _prf(len(matched), len(ref), len(est))
    onset_only = match_notes(ref, est, replace(tol, with_offset=False))
    p_no, r_no, f1_no = _prf(len(onset_only), len(ref), len(est))
    return EvalReport(precision, recall, f1, f1_no, p_no, r_no, len(ref), len(est), matched)


def technique_metrics(truth: Sequence, pred: Sequence) -> TechniqueReport:
    if len(truth) != len(pred):
        raise ContractError(f"{len(truth)} true labels vs {len(pred)} predictions")
    confusion = np.zeros((NUM_TECHNIQUES, NUM_TECHNIQUES), dtype=np.int64)
    for t, p in zip(truth, pred):
        t, p = int(Technique.parse(t)), int(Technique.parse(p))
        confusion[t, p] += 1

    per_class = []
    for k in range(NUM_TECHNIQUES):
        support = confusion[k].sum()
        per_class.append(float(confusion[k, k] / support) if support else float("nan"))
    present = [a for a in per_class if not np.isnan(a)]
    macro = float(np.mean(present)) if present else 0.0
    return TechniqueReport(macro, per_class, confusion)


def matched_technique_metrics(pieces: Iterable[Tuple[Sequence, Sequence]],
                              tol: ToleranceSpec = ToleranceSpec()) -> Optional[TechniqueReport]:
    """
    Метрики техник по нотам, сопоставленным без учёта офсета.
    pieces - пары (эталон, оценка) по пьесам; сопоставление внутри пьесы, матрица общая.
    """
    onset_only = replace(tol, with_offset=False)
    truth, pred = [], []
    for ref, est in pieces:
        for i, j in match_notes(ref, est, onset_only):
            truth.append(ref[i].technique)
            pred.append(est[j].technique)
    if not truth:
        return None
    return technique_metrics(truth, pred)
