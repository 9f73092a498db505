"""
Цикл обучения модуля транскрипции: сегменты 10 с -> аугментация -> мел -> цели -> шаг Adam.
"""

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import torch
from tqdm import tqdm

from annotations.manifest import DatasetManifest
from audio.augmentation import EffectChainConfig
from audio.frontend import MelConfig, compute_mel
from common.utils import append_jsonl, derive_seed, get_device
from decoding.notes import DecodeConfig, decode_notes
from evaluation.metrics import ToleranceSpec, note_metrics
from nets.checkpoint import TRANSCRIPTION_SECTION, build_payload, load_checkpoint, write_payload
from nets.transcription import (
    LossBreakdown,
    TranscriptionNet,
    TranscriptionParams,
    compute_losses,
    init_from_checkpoint,
    predict,
)
from .data import TrainingExample, load_examples, transcription_batch
from .schedule import TrainConfig, cosine_lr

logger = logging.getLogger(__name__)

METRICS_LOG = "metrics.jsonl"


@dataclass
class TrainResult:
    checkpoint: Path
    history: List[Dict] = field(default_factory=list)
    validation: List[Dict] = field(default_factory=list)
    best_checkpoint: Optional[Path] = None


def make_optimizer(net: torch.nn.Module, config: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.Adam(net.parameters(), lr=config.lr_init, betas=(0.9, 0.999), weight_decay=0.0)


def set_lr(optimizer: torch.optim.Optimizer, lr: float):
    for group in optimizer.param_groups:
        group["lr"] = lr


def validate_transcription(net: TranscriptionNet, examples: List[TrainingExample], mel_config: MelConfig,
                           decode_config: DecodeConfig = DecodeConfig(),
                           tolerance: ToleranceSpec = ToleranceSpec()) -> Dict[str, float]:
    """Средний F1 (с офсетом и без) на отложенных пьесах."""
    f1, f1_no = [], []
    for example in examples:
        mel = compute_mel(example.clip, mel_config)
        notes = decode_notes(predict(net, mel), decode_config, mel.frame_period)
        report = note_metrics(example.notes, notes, tolerance)
        f1.append(report.f1)
        f1_no.append(report.f1_no_offset)
    return {"val_f1": float(np.mean(f1)) if f1 else 0.0, "val_f1_no": float(np.mean(f1_no)) if f1_no else 0.0}


def train_transcription(train_manifest: DatasetManifest, config: TrainConfig, out_dir: Union[str, Path],
                        params: TranscriptionParams = TranscriptionParams(), mel_config: MelConfig = MelConfig(),
                        augmentation: Optional[EffectChainConfig] = None,
                        val_manifest: Optional[DatasetManifest] = None, config_hash: str = "",
                        resume_from: Optional[Union[str, Path]] = None,
                        device: Optional[torch.device] = None) -> TrainResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    device = device or get_device()

    examples = load_examples(train_manifest, mel_config.sample_rate)
    val_examples = load_examples(val_manifest, mel_config.sample_rate) if val_manifest is not None and len(val_manifest) else []
    augmentation = augmentation if config.augment else None

    torch.manual_seed(config.seed)
    net = TranscriptionNet(params)
    if config.init_checkpoint:
        init_from_checkpoint(net, config.init_checkpoint)
    net.to(device)
    optimizer = make_optimizer(net, config)

    start_step = 0
    if resume_from is not None:
        payload = load_checkpoint(resume_from, TRANSCRIPTION_SECTION, mel_config=mel_config, config_hash=config_hash)
        net.load_state_dict(payload["state_dict"])
        optimizer.load_state_dict(payload["extra"]["optimizer"])
        start_step = int(payload["extra"]["step"])
        logger.info(f"Продолжение обучения с шага {start_step}")

    log_path = out_dir / METRICS_LOG
    if start_step == 0 and log_path.exists():
        log_path.unlink()

    result = TrainResult(checkpoint=out_dir / "transcription_final.pt")
    best_f1 = -1.0

    def checkpoint(step: int, name: str) -> Path:
        extra = {"step": step, "seed": config.seed, "optimizer": optimizer.state_dict(),
                 "train_config": asdict(config)}
        return write_payload(out_dir / name, build_payload(TRANSCRIPTION_SECTION, net, params, mel_config,
                                                           config_hash, extra))

    progress = tqdm(range(start_step, config.steps), desc="train-transcription", initial=start_step,
                    total=config.steps)
    for step in progress:
        # дропаут и выбор батча зависят только от (seed, step)
        torch.manual_seed(derive_seed(config.seed, step))
        mel, targets = transcription_batch(examples, step, config.batch_size, config.clip_duration,
                                           mel_config, config.seed, augmentation)
        mel = mel.to(device)
        targets = {k: v.to(device) for k, v in targets.items()}

        lr = cosine_lr(step, config)
        set_lr(optimizer, lr)
        net.train()
        outputs = net(mel)
        losses = compute_losses(outputs, targets)
        optimizer.zero_grad()
        losses["total"].backward()
        if config.grad_clip is not None:
            torch.nn.utils.clip_grad_norm_(net.parameters(), config.grad_clip)
        optimizer.step()

        record = {"step": step + 1, "lr": lr, **LossBreakdown.from_tensors(losses).to_dict()}
        append_jsonl(log_path, record)
        result.history.append(record)
        progress.set_postfix(loss=f"{record['total']:.4f}")

        done = step + 1
        if done % config.checkpoint_every == 0 or done == config.steps:
            path = checkpoint(done, f"transcription_step{done:06d}.pt")
            if val_examples:
                scores = {"step": done, **validate_transcription(net, val_examples, mel_config)}
                append_jsonl(log_path, scores)
                result.validation.append(scores)
                logger.info(f"Шаг {done}: val F1_no={scores['val_f1_no']:.4f}")
                if scores["val_f1_no"] > best_f1:
                    best_f1 = scores["val_f1_no"]
                    result.best_checkpoint = path

    result.checkpoint = checkpoint(config.steps, "transcription_final.pt")
    logger.info(f"✅ Обучение транскрипции завершено: {result.checkpoint}")
    return result
