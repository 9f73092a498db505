"""
Файлы отчётов: TSV по пьесам + агрегат, текстовая таблица, матрица ошибок (CSV/PNG),
экспорт вложений и сводка абляции в раскладке таблицы результатов.
"""

import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np
import pandas as pd

from annotations.technique import Technique
from common.utils import write_jsonl
from .metrics import EvalReport, TechniqueReport

logger = logging.getLogger(__name__)

TECHNIQUE_NAMES = {
    Technique.DETACHE: "Détaché",
    Technique.FLAGEOLET: "Flageolet",
    Technique.SPICCATO: "Spiccato",
    Technique.PIZZICATO: "Pizzicato",
    Technique.NONE: "None",
}
# порядок колонок таблицы абляции
ABLATION_COLUMNS = [Technique.FLAGEOLET, Technique.DETACHE, Technique.PIZZICATO, Technique.SPICCATO]


def markdown_table(frame: pd.DataFrame) -> str:
    """Таблица отчёта в markdown; ячейки приводятся к строкам, '|' и переводы строк экранируются."""
    if frame.columns.empty:
        return ""
    headers = [str(c) or f"col_{i}" for i, c in enumerate(frame.columns)]
    cells = frame.astype(str).apply(lambda col: col.str.replace("|", "/", regex=False)
                                    .str.replace("\n", " ", regex=False))
    lines = ["| " + " | ".join(headers) + " |", "| " + " | ".join(["---"] * len(headers)) + " |"]
    lines += ["| " + " | ".join(row) + " |" for row in cells.itertuples(index=False, name=None)]
    return "\n".join(lines)


def _header_lines(meta: Optional[Mapping]) -> List[str]:
    return [f"# {k}: {v}" for k, v in (meta or {}).items()]


def write_eval_report(out_dir: Union[str, Path], per_piece: Mapping[str, EvalReport],
                      meta: Optional[Mapping] = None) -> Dict[str, Path]:
    """notes_report.tsv (по строке на пьесу + строка 'mean') и notes_report.md."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [dict(piece=name, **report.to_row()) for name, report in per_piece.items()]
    frame = pd.DataFrame(rows, columns=["piece", "precision", "recall", "f1", "precision_no_offset",
                                        "recall_no_offset", "f1_no_offset", "n_ref", "n_est"])
    if len(frame):
        mean = frame.drop(columns=["piece"]).mean(numeric_only=True).to_dict()
        frame = pd.concat([frame, pd.DataFrame([dict(piece="mean", **mean)])], ignore_index=True)

    tsv_path = out_dir / "notes_report.tsv"
    with tsv_path.open("w", encoding="utf-8", newline="") as fh:
        for line in _header_lines(meta):
            fh.write(line + "\n")
        frame.to_csv(fh, sep="\t", index=False, float_format="%.4f", lineterminator="\n")

    shown = frame[["piece", "precision", "recall", "f1", "f1_no_offset"]].rename(columns={
        "piece": "Piece", "precision": "P", "recall": "R", "f1": "F1", "f1_no_offset": "F1 (no offset)"})
    for column in shown.columns[1:]:
        shown[column] = shown[column].map("{:.3f}".format)
    table = markdown_table(shown)
    md_path = out_dir / "notes_report.md"
    md_path.write_text("\n".join(_header_lines(meta) + ["", table, ""]), encoding="utf-8")
    logger.info(f"Отчёт транскрипции: {tsv_path}")
    return {"tsv": tsv_path, "table": md_path}


def write_technique_report(out_dir: Union[str, Path], report: TechniqueReport, meta: Optional[Mapping] = None,
                           plot: bool = True, prefix: str = "technique") -> Dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = [t.label for t in Technique]
    paths = {}

    confusion = pd.DataFrame(report.confusion, index=labels, columns=labels)
    confusion.index.name = "true\\pred"
    paths["confusion"] = out_dir / f"{prefix}_confusion.csv"
    confusion.to_csv(paths["confusion"], lineterminator="\n")

    rows = [[TECHNIQUE_NAMES[t], _pct(report.per_class_accuracy[int(t)]), int(report.support[int(t)])]
            for t in Technique]
    rows.append(["Macro", _pct(report.macro_accuracy), int(report.support.sum())])
    table = markdown_table(pd.DataFrame(rows, columns=["Class", "Accuracy (%)", "Support"]))
    paths["table"] = out_dir / f"{prefix}_report.md"
    paths["table"].write_text("\n".join(_header_lines(meta) + ["", table, ""]), encoding="utf-8")

    if plot:
        paths["plot"] = plot_confusion(report, out_dir / f"{prefix}_confusion.png")
    logger.info(f"Отчёт по техникам: macro={report.macro_accuracy:.4f}")
    return paths


def plot_confusion(report: TechniqueReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    support = report.support
    shown = [t for t in Technique if support[int(t)] > 0 or report.confusion[:, int(t)].sum() > 0]
    idx = [int(t) for t in shown]
    matrix = report.confusion[np.ix_(idx, idx)].astype(float)
    rows = matrix.sum(axis=1, keepdims=True)
    normalized = np.divide(matrix, rows, out=np.zeros_like(matrix), where=rows > 0)

    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.imshow(normalized, cmap="Blues", vmin=0.0, vmax=1.0)
    names = [TECHNIQUE_NAMES[t] for t in shown]
    ax.set_xticks(range(len(shown)))
    ax.set_xticklabels(names, rotation=45, ha="right")
    ax.set_yticks(range(len(shown)))
    ax.set_yticklabels(names)
    ax.set_xlabel("Predicted")
    ax.set_ylabel("True")
    for i in range(len(shown)):
        for j in range(len(shown)):
            ax.text(j, i, f"{normalized[i, j]:.2f}", ha="center", va="center",
                    color="white" if normalized[i, j] > 0.5 else "black", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def write_embeddings(path: Union[str, Path], note_ids: Sequence[str], truth: Sequence, pred: Sequence,
                     embeddings: np.ndarray) -> Path:
    """Строки {note_id, true, pred, embedding} для внешней визуализации (UMAP и т.п.)."""
    records = (
        {
            "note_id": str(note_id),
            "true": Technique.parse(t).label if t is not None else None,
            "pred": Technique.parse(p).label,
            "embedding": [float(x) for x in vector],
        }
        for note_id, t, p, vector in zip(note_ids, truth, pred, embeddings)
    )
    write_jsonl(path, records)
    return Path(path)


def _pct(value: float) -> str:
    return "-" if value is None or np.isnan(value) else f"{100.0 * value:.2f}"


def _mean_std(values: Sequence[float]) -> str:
    values = [v for v in values if not np.isnan(v)]
    if not values:
        return "-"
    return f"{100.0 * np.mean(values):.2f} (± {100.0 * np.std(values):.2f})"


def summarize_ablation(runs: Mapping[str, Sequence[TechniqueReport]]) -> pd.DataFrame:
    """Строка на условие абляции: macro и точности по техникам, среднее ± std по ротациям."""
    rows = []
    for condition, reports in runs.items():
        row = {"Condition": condition, "Macro": _mean_std([r.macro_accuracy for r in reports])}
        for t in ABLATION_COLUMNS:
            row[TECHNIQUE_NAMES[t]] = _mean_std([r.per_class_accuracy[int(t)] for r in reports])
        rows.append(row)
    return pd.DataFrame(rows, columns=["Condition", "Macro"] + [TECHNIQUE_NAMES[t] for t in ABLATION_COLUMNS])


def write_ablation_summary(out_dir: Union[str, Path], runs: Mapping[str, Sequence[TechniqueReport]],
                           meta: Optional[Mapping] = None) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frame = summarize_ablation(runs)
    tsv_path = out_dir / "ablation_summary.tsv"
    frame.to_csv(tsv_path, sep="\t", index=False, lineterminator="\n")
    md_path = out_dir / "ablation_summary.md"
    table = markdown_table(frame)
    md_path.write_text("\n".join(_header_lines(meta) + ["", table, ""]), encoding="utf-8")
    logger.info(f"Сводка абляции: {len(frame)} условий -> {md_path}")
    return {"tsv": tsv_path, "table": md_path}
