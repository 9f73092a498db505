"""
K-fold оценка классификатора техник и прогоны абляции признаков транскрипции.
На каждой ротации: обучение на синтетическом корпусе, выбор чекпоинта по валидационным фолдам,
отчёт по тестовому фолду.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

import numpy as np
import torch

from annotations.manifest import DatasetManifest
from annotations.splits import kfold
from common.utils import get_device
from decoding.pipeline import load_articulation_classifier, load_transcription_net
from evaluation.metrics import TechniqueReport
from evaluation.reports import write_ablation_summary, write_embeddings
from nets.articulation import ABLATION_PRESETS, AblationMask, ArticulationParams
from .articulation import manifest_key, evaluate_windows, note_windows, train_articulation
from .data import load_examples
from .schedule import TrainConfig

logger = logging.getLogger(__name__)


@dataclass
class KFoldResult:
    mask: AblationMask
    reports: List[TechniqueReport] = field(default_factory=list)
    checkpoints: List[Path] = field(default_factory=list)

    @property
    def macro_mean(self) -> float:
        return float(np.mean([r.macro_accuracy for r in self.reports])) if self.reports else 0.0

    @property
    def macro_std(self) -> float:
        return float(np.std([r.macro_accuracy for r in self.reports])) if self.reports else 0.0


def run_kfold(train_manifest: DatasetManifest, eval_manifest: DatasetManifest, k: int, config: TrainConfig,
              out_dir: Union[str, Path], transcription_checkpoint: Union[str, Path],
              mask: AblationMask = AblationMask(), params: ArticulationParams = ArticulationParams(),
              config_hash: str = "", cache: Optional[dict] = None,
              device: Optional[torch.device] = None) -> KFoldResult:
    out_dir = Path(out_dir)
    device = device or get_device()
    cache = cache if cache is not None else {}
    transcriber, mel_config, _ = load_transcription_net(transcription_checkpoint, device)

    result = KFoldResult(mask)
    for rotation in kfold(eval_manifest, k, config.seed):
        rot_dir = out_dir / f"rotation_{rotation.rotation}"
        trained = train_articulation(
            train_manifest, replace(config, seed=config.seed + rotation.rotation), rot_dir,
            transcription_checkpoint, mask=mask, params=params, mel_config=mel_config,
            val_manifest=rotation.validation, config_hash=config_hash, device=device, cache=cache,
        )
        classifier = load_articulation_classifier(trained.best_checkpoint, device, mel_config)

        tkey = ("test", str(transcription_checkpoint), manifest_key(rotation.test))
        if tkey not in cache:
            cache[tkey] = note_windows(load_examples(rotation.test, mel_config.sample_rate), transcriber, mel_config,
                                       params.window_frames)
        windows, labels, ids = cache[tkey]
        report, predicted, embeddings = evaluate_windows(classifier.net, windows, labels, mask)
        write_embeddings(rot_dir / "test_embeddings.jsonl", ids, labels, predicted, embeddings)

        result.reports.append(report)
        result.checkpoints.append(trained.best_checkpoint)
        logger.info(f"[{mask.label}] ротация {rotation.rotation}: macro={report.macro_accuracy:.4f}")

    logger.info(f"[{mask.label}] macro {result.macro_mean:.4f} ± {result.macro_std:.4f} по {k} ротациям")
    return result


def run_ablation(train_manifest: DatasetManifest, eval_manifest: DatasetManifest, k: int, config: TrainConfig,
                 out_dir: Union[str, Path], transcription_checkpoint: Union[str, Path],
                 presets: Optional[Mapping[str, AblationMask]] = None,
                 params: ArticulationParams = ArticulationParams(), config_hash: str = "",
                 meta: Optional[Mapping] = None, device: Optional[torch.device] = None) -> Dict[str, KFoldResult]:
    """Отдельный прогон k-fold на каждую строку абляции, затем сводная таблица."""
    out_dir = Path(out_dir)
    presets = presets or ABLATION_PRESETS
    cache: dict = {}
    results: Dict[str, KFoldResult] = {}
    for name, mask in presets.items():
        slug = name.lower().replace(" ", "_")
        results[name] = run_kfold(train_manifest, eval_manifest, k, config, out_dir / slug,
                                  transcription_checkpoint, mask, params, config_hash, cache, device)
    write_ablation_summary(out_dir, {name: r.reports for name, r in results.items()}, meta)
    return results
