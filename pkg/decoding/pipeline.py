"""
Сквозной пайплайн: аудио -> мел -> кадровые предсказания -> ноты -> техники -> MIDI + JSONL.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import torch

from audio.frontend import AudioClip, MelConfig, MelTensor, compute_mel, load_audio
from common.errors import IncompatibleCheckpointError
from common.utils import get_device
from nets.articulation import AblationMask, ArticulationClassifier, ArticulationNet, ArticulationParams
from nets.checkpoint import ARTICULATION_SECTION, TRANSCRIPTION_SECTION, load_checkpoint, mel_config_of
from nets.transcription import FramePredictions, TranscriptionNet, TranscriptionParams, predict
from .io import export_midi, write_notes_jsonl
from .notes import DecodeConfig, NoteEvent, attach_techniques, decode_notes

logger = logging.getLogger(__name__)


@dataclass
class TranscriptionResult:
    notes: List[NoteEvent]
    mel: MelTensor
    predictions: FramePredictions
    embeddings: Optional[np.ndarray] = None


def load_transcription_net(path: Union[str, Path], device: Optional[torch.device] = None,
                           mel_config: Optional[MelConfig] = None):
    payload = load_checkpoint(path, TRANSCRIPTION_SECTION, mel_config=mel_config)
    net = TranscriptionNet(TranscriptionParams.from_dict(payload["params"]))
    net.load_state_dict(payload["state_dict"])
    net.to(device or get_device()).eval()
    return net, mel_config_of(payload), payload


def load_articulation_classifier(path: Union[str, Path], device: Optional[torch.device] = None,
                                 mel_config: Optional[MelConfig] = None,
                                 transcription_hash: Optional[str] = None) -> ArticulationClassifier:
    """transcription_hash - model_hash сети транскрипции, на признаках которой должен быть обучен классификатор."""
    payload = load_checkpoint(path, ARTICULATION_SECTION, mel_config=mel_config)
    trained_on = payload.get("extra", {}).get("transcription_hash")
    if transcription_hash is not None and trained_on is not None and trained_on != transcription_hash:
        raise IncompatibleCheckpointError(f"{path}: trained on features of a different transcription model")
    net = ArticulationNet(ArticulationParams.from_dict(payload["params"]))
    net.load_state_dict(payload["state_dict"])
    net.to(device or get_device()).eval()
    mask = AblationMask(**payload.get("extra", {}).get("mask", {}))
    return ArticulationClassifier(net, mask)


class Transcriber:

    def __init__(self, net: TranscriptionNet, mel_config: MelConfig = MelConfig(),
                 decode_config: DecodeConfig = DecodeConfig(),
                 classifier: Optional[ArticulationClassifier] = None):
        self.net = net
        self.mel_config = mel_config
        self.decode_config = decode_config
        self.classifier = classifier

    @classmethod
    def from_checkpoints(cls, transcription_path: Union[str, Path],
                         articulation_path: Optional[Union[str, Path]] = None,
                         decode_config: DecodeConfig = DecodeConfig(),
                         device: Optional[torch.device] = None) -> "Transcriber":
        device = device or get_device()
        net, mel_config, payload = load_transcription_net(transcription_path, device)
        classifier = None
        if articulation_path is not None:
            classifier = load_articulation_classifier(articulation_path, device, mel_config, payload["model_hash"])
        return cls(net, mel_config, decode_config, classifier)

    def transcribe(self, clip: AudioClip) -> TranscriptionResult:
        mel = compute_mel(clip, self.mel_config)
        pred = predict(self.net, mel)
        notes = decode_notes(pred, self.decode_config, mel.frame_period)
        embeddings = None
        if self.classifier is not None:
            notes, embeddings = attach_techniques(notes, mel, pred, self.classifier, return_embeddings=True)
        return TranscriptionResult(notes, mel, pred, embeddings)

    def transcribe_file(self, audio_path: Union[str, Path], out_dir: Union[str, Path]) -> Dict:
        audio_path = Path(audio_path)
        out_dir = Path(out_dir)
        result = self.transcribe(load_audio(audio_path, self.mel_config.sample_rate))
        midi_path = export_midi(result.notes, out_dir / f"{audio_path.stem}.mid")
        notes_path = write_notes_jsonl(result.notes, out_dir / f"{audio_path.stem}.notes.jsonl")
        logger.info(f"✅ {audio_path.name}: {len(result.notes)} нот -> {midi_path.name}")
        return {"success": True, "message": f"{len(result.notes)} notes", "midi": midi_path,
                "notes": notes_path, "result": result}
