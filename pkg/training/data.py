"""
Подготовка обучающих примеров: загрузка пар аудио+MIDI из манифеста, нарезка сегментов, батчи.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from tqdm import tqdm

from annotations.manifest import DatasetManifest, ManifestRecord
from annotations.midi import load_midi
from annotations.notes import NoteAnnotation, clip_notes
from annotations.targets import generate_targets
from audio.augmentation import EffectChainConfig, augment
from audio.frontend import AudioClip, MelConfig, clip_or_pad, compute_mel, load_audio
from common.errors import ContractError
from common.utils import derive_seed

logger = logging.getLogger(__name__)

TRAINING_VELOCITY = 0.5


@dataclass
class TrainingExample:
    record: ManifestRecord
    clip: AudioClip
    notes: List[NoteAnnotation]

    @property
    def label(self):
        if self.record.technique is not None:
            return self.record.technique
        techniques = {n.technique for n in self.notes}
        return techniques.pop() if len(techniques) == 1 else None


def load_examples(manifest: DatasetManifest, sample_rate: int = 16000) -> List[TrainingExample]:
    if len(manifest) == 0:
        raise ContractError("manifest is empty")
    examples = []
    for record in tqdm(manifest, desc="load", leave=False):
        clip = load_audio(record.audio_path, sample_rate)
        notes = load_midi(record.annotation_path)
        examples.append(TrainingExample(record, clip, notes))
    logger.info(f"Загружено примеров: {len(examples)}")
    return examples


def sample_segment(example: TrainingExample, duration: float, rng: np.random.Generator) -> Tuple[AudioClip, List]:
    """Случайный сегмент длины duration (с дополнением тишиной) и его ноты во времени сегмента."""
    rate = example.clip.sample_rate
    slack = max(0.0, example.clip.duration - duration)
    start = float(rng.uniform(0.0, slack)) if slack > 0 else 0.0
    first = int(round(start * rate))
    segment = AudioClip(example.clip.samples[first:], rate) if first < len(example.clip) else \
        AudioClip(np.zeros(1, dtype=np.float32), rate)
    return clip_or_pad(segment, duration), clip_notes(example.notes, first / rate, duration)


def transcription_batch(examples: Sequence[TrainingExample], step: int, batch_size: int, duration: float,
                        mel_config: MelConfig, seed: int,
                        augmentation: Optional[EffectChainConfig] = None) -> Tuple[torch.Tensor, Dict[str, torch.Tensor]]:
    """Батч для шага step; зависит только от (seed, step), поэтому возобновление воспроизводимо."""
    rng = np.random.default_rng([seed, step])
    mels, targets = [], {"onset": [], "offset": [], "frame": [], "velocity": []}
    for b in range(batch_size):
        example = examples[int(rng.integers(len(examples)))]
        clip, notes = sample_segment(example, duration, rng)
        if augmentation is not None and augmentation.enabled:
            clip = augment(clip, augmentation, derive_seed(seed, step, b))
        mel = compute_mel(clip, mel_config)
        rolls = generate_targets(notes, mel.n_frames, mel.frame_period, constant_velocity=TRAINING_VELOCITY)
        mels.append(mel.values)
        targets["onset"].append(rolls.onset_reg)
        targets["offset"].append(rolls.offset_reg)
        targets["frame"].append(rolls.frame)
        targets["velocity"].append(rolls.velocity)
    mel_tensor = torch.from_numpy(np.stack(mels).astype(np.float32))
    return mel_tensor, {k: torch.from_numpy(np.stack(v).astype(np.float32)) for k, v in targets.items()}
