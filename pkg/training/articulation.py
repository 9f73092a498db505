"""
Обучение классификатора техник поверх замороженной сети транскрипции.
Признаки транскрипции считаются один раз до цикла обучения.
"""

import logging
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from tqdm import tqdm

from annotations.manifest import DatasetManifest
from annotations.technique import Technique
from audio.frontend import MelConfig, clip_or_pad, compute_mel
from common.errors import AnnotationError, ContractError
from common.utils import append_jsonl, derive_seed, get_device
from decoding.pipeline import load_transcription_net
from evaluation.metrics import TechniqueReport, technique_metrics
from nets.articulation import (
    WINDOW_FRAMES,
    WINDOW_SECONDS,
    AblationMask,
    ArticulationNet,
    ArticulationParams,
    NoteWindow,
    articulation_loss,
    classify_windows,
    make_note_window,
    window_to_tensors,
)
from nets.checkpoint import ARTICULATION_SECTION, build_payload, write_payload
from nets.transcription import TranscriptionNet, predict
from .data import TrainingExample, load_examples
from .schedule import TrainConfig, cosine_lr
from .transcription import METRICS_LOG, TrainResult, make_optimizer, set_lr

logger = logging.getLogger(__name__)


def manifest_key(manifest: DatasetManifest) -> Tuple[str, ...]:
    return tuple(r.key for r in manifest)


def note_windows(examples: Sequence[TrainingExample], transcriber: TranscriptionNet,
                 mel_config: MelConfig, n_frames: int = WINDOW_FRAMES) -> Tuple[List[NoteWindow], List[Technique], List[str]]:
    """Окно по первой ноте каждого примера; признаки - выходы замороженной транскрипции."""
    windows, labels, ids = [], [], []
    for example in tqdm(examples, desc="features", leave=False):
        label = example.label
        if label is None:
            raise AnnotationError(f"{example.record.key}: single-note clip without a technique label")
        onset = example.notes[0].onset if example.notes else 0.0
        # клип не короче окна от атаки
        clip = clip_or_pad(example.clip, max(example.clip.duration, onset + WINDOW_SECONDS))
        mel = compute_mel(clip, mel_config)
        pred = predict(transcriber, mel)
        windows.append(make_note_window(mel, pred, onset, n_frames))
        labels.append(Technique.parse(label))
        ids.append(example.record.key)
    return windows, labels, ids


def evaluate_windows(net: ArticulationNet, windows: Sequence[NoteWindow], labels: Sequence[Technique],
                     mask: AblationMask) -> Tuple[TechniqueReport, List[Technique], np.ndarray]:
    predicted, embeddings = classify_windows(net, windows, mask)
    return technique_metrics(labels, predicted), predicted, embeddings


def train_articulation(train_manifest: DatasetManifest, config: TrainConfig, out_dir: Union[str, Path],
                       transcription_checkpoint: Union[str, Path], mask: AblationMask = AblationMask(),
                       params: ArticulationParams = ArticulationParams(), mel_config: Optional[MelConfig] = None,
                       val_manifest: Optional[DatasetManifest] = None, config_hash: str = "",
                       device: Optional[torch.device] = None,
                       cache: Optional[dict] = None) -> TrainResult:
    """
    cache - словарь для повторного использования окон между прогонами абляции
    (признаки зависят только от чекпоинта транскрипции и манифеста).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    device = device or get_device()

    transcriber, ckpt_mel, transcription_payload = load_transcription_net(transcription_checkpoint, device, mel_config)
    mel_config = ckpt_mel
    if params.n_mels != mel_config.n_mels or params.in_channels != len(mel_config.window_lengths):
        raise ContractError("articulation params do not match the transcription mel front end")

    cache = cache if cache is not None else {}
    key = ("train", str(transcription_checkpoint), manifest_key(train_manifest))
    if key not in cache:
        cache[key] = note_windows(load_examples(train_manifest, mel_config.sample_rate), transcriber, mel_config,
                                  params.window_frames)
    windows, labels, _ = cache[key]

    val = None
    if val_manifest is not None and len(val_manifest):
        vkey = ("val", str(transcription_checkpoint), manifest_key(val_manifest))
        if vkey not in cache:
            cache[vkey] = note_windows(load_examples(val_manifest, mel_config.sample_rate), transcriber, mel_config,
                                       params.window_frames)
        val = cache[vkey]

    torch.manual_seed(config.seed)
    net = ArticulationNet(params).to(device)
    optimizer = make_optimizer(net, config)
    all_mel, all_features = window_to_tensors(windows)
    all_labels = np.array([int(t) for t in labels], dtype=np.int64)

    log_path = out_dir / METRICS_LOG
    if log_path.exists():
        log_path.unlink()
    result = TrainResult(checkpoint=out_dir / "articulation_final.pt")
    best = -1.0

    def checkpoint(step: int, name: str) -> Path:
        extra = {"step": step, "seed": config.seed, "mask": asdict(mask), "train_config": asdict(config),
                 "transcription_hash": transcription_payload["model_hash"]}
        return write_payload(out_dir / name, build_payload(ARTICULATION_SECTION, net, params, mel_config,
                                                           config_hash, extra))

    progress = tqdm(range(config.steps), desc=f"train-articulation [{mask.label}]")
    for step in progress:
        torch.manual_seed(derive_seed(config.seed, step))
        rng = np.random.default_rng([config.seed, step])
        with_replacement = config.batch_size > len(windows)
        idx = torch.from_numpy(rng.choice(len(windows), size=config.batch_size, replace=with_replacement))
        mel = all_mel[idx].to(device)
        features = all_features[idx].to(device)

        lr = cosine_lr(step, config)
        set_lr(optimizer, lr)
        net.train()
        loss = articulation_loss(net(mel, features, mask), all_labels[idx.numpy()])
        optimizer.zero_grad()
        loss.backward()
        if config.grad_clip is not None:
            torch.nn.utils.clip_grad_norm_(net.parameters(), config.grad_clip)
        optimizer.step()

        record = {"step": step + 1, "lr": lr, "technique_ce": float(loss)}
        append_jsonl(log_path, record)
        result.history.append(record)
        progress.set_postfix(loss=f"{float(loss):.4f}")

        done = step + 1
        if done % config.checkpoint_every == 0 or done == config.steps:
            path = checkpoint(done, f"articulation_step{done:06d}.pt")
            if val is not None:
                report, _, _ = evaluate_windows(net, val[0], val[1], mask)
                scores = {"step": done, "val_macro": report.macro_accuracy}
                append_jsonl(log_path, scores)
                result.validation.append(scores)
                if report.macro_accuracy > best:
                    best = report.macro_accuracy
                    result.best_checkpoint = path

    result.checkpoint = checkpoint(config.steps, "articulation_final.pt")
    if result.best_checkpoint is None:
        result.best_checkpoint = result.checkpoint
    logger.info(f"✅ Обучение классификатора [{mask.label}] завершено: {result.checkpoint}")
    return result
