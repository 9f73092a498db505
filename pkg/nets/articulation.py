"""
Классификатор техники по ноте: акустическое вложение (4 conv-блока) + проекция признаков транскрипции.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass, fields
from typing import Dict, List, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from annotations.notes import PITCH_BINS
from annotations.technique import NUM_TECHNIQUES, Technique
from audio.frontend import MelTensor
from common.errors import ContractError, ShapeError
from .transcription import FramePredictions

logger = logging.getLogger(__name__)

WINDOW_SECONDS = 2.0
WINDOW_FRAMES = 201
FEATURE_PLANES = ("onset", "offset", "frame", "velocity")


@dataclass(frozen=True)
class ArticulationParams:
    conv_channels: Tuple[int, ...] = (48, 64, 96, 128)
    acoustic_dim: int = 128
    feature_dim: int = 128
    classes: int = NUM_TECHNIQUES
    dropout: float = 0.25
    in_channels: int = 3
    n_mels: int = 229
    window_frames: int = WINDOW_FRAMES

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        if len(self.conv_channels) != 4:
            raise ContractError(f"articulation net has four conv blocks, got {len(self.conv_channels)}")
        if self.classes != NUM_TECHNIQUES:
            raise ContractError(f"classes must be {NUM_TECHNIQUES}")
        if self.acoustic_dim < 1 or self.feature_dim < 1:
            raise ContractError("embedding widths must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError(f"dropout {self.dropout} outside [0, 1)")

    @property
    def embedding_dim(self) -> int:
        return self.acoustic_dim + self.feature_dim

    @classmethod
    def from_dict(cls, data: Dict) -> "ArticulationParams":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass(frozen=True)
class AblationMask:
    include_onset: bool = True
    include_offset: bool = True
    include_frame: bool = True
    include_velocity: bool = True
    include_acoustic: bool = True

    def __post_init__(self):
        if not (self.include_acoustic or any(self.feature_flags())):
            raise ContractError("ablation mask switches off every input")

    def feature_flags(self) -> Tuple[bool, bool, bool, bool]:
        return self.include_onset, self.include_offset, self.include_frame, self.include_velocity

    @property
    def label(self) -> str:
        for name, preset in ABLATION_PRESETS.items():
            if preset == self:
                return name
        return "custom"


# строки таблицы абляции, в её порядке
ABLATION_PRESETS: "OrderedDict[str, AblationMask]" = OrderedDict([
    ("Full ablation", AblationMask(False, False, False, False)),
    ("Frame excluded", AblationMask(include_frame=False)),
    ("Offset excluded", AblationMask(include_offset=False)),
    ("Onset excluded", AblationMask(include_onset=False)),
    ("Velocity excluded", AblationMask(include_velocity=False)),
    ("No ablation", AblationMask()),
])


def ablation_preset(name: str) -> AblationMask:
    key = {k.lower().replace(" ", "-"): k for k in ABLATION_PRESETS}.get(name.lower().replace(" ", "-").replace("_", "-"))
    if key is None:
        raise ContractError(f"unknown ablation '{name}', expected one of {list(ABLATION_PRESETS)}")
    return ABLATION_PRESETS[key]


@dataclass
class NoteWindow:
    mel: MelTensor
    features: np.ndarray  # (4, T, 88): onset, offset, frame, velocity

    def __post_init__(self):
        t = self.mel.n_frames
        if self.features.shape != (len(FEATURE_PLANES), t, PITCH_BINS):
            raise ShapeError(f"feature block {self.features.shape} not aligned with {t} mel frames")


def make_note_window(mel: MelTensor, pred: FramePredictions, onset: float,
                     n_frames: int = WINDOW_FRAMES) -> NoteWindow:
    """2-секундное окно от атаки ноты; мел дополняется тишиной, признаки - нулями."""
    if mel.n_frames != pred.n_frames:
        raise ShapeError(f"mel has {mel.n_frames} frames, predictions {pred.n_frames}")
    start = int(round(onset / mel.frame_period))
    return NoteWindow(mel.segment(start, n_frames), pred.segment(start, n_frames))


class ConvPoolBlock(nn.Module):

    def __init__(self, in_channels: int, out_channels: int, dropout: float):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1, bias=False)
        self.bn = nn.BatchNorm2d(out_channels)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.relu(self.bn(self.conv(x)))
        x = F.avg_pool2d(x, kernel_size=2, ceil_mode=True)
        return self.dropout(x)


class ArticulationNet(nn.Module):

    def __init__(self, params: ArticulationParams = ArticulationParams()):
        super().__init__()
        self.params = params
        channels = (params.in_channels,) + params.conv_channels
        self.input_bn = nn.BatchNorm2d(params.n_mels)
        self.blocks = nn.ModuleList(
            ConvPoolBlock(channels[i], channels[i + 1], params.dropout) for i in range(len(params.conv_channels))
        )
        self.acoustic_fc = nn.Linear(params.conv_channels[-1], params.acoustic_dim)
        # без смещения: полностью исключённые признаки дают нулевое вложение
        self.feature_fc = nn.Linear(len(FEATURE_PLANES) * PITCH_BINS, params.feature_dim, bias=False)
        self.dropout = nn.Dropout(params.dropout)
        self.classifier = nn.Linear(params.embedding_dim, params.classes)

    def _check(self, mel: torch.Tensor, features: torch.Tensor):
        p = self.params
        if mel.dim() != 4 or mel.shape[1:] != (p.in_channels, p.window_frames, p.n_mels):
            raise ShapeError(f"expected (B, {p.in_channels}, {p.window_frames}, {p.n_mels}) mel, got {tuple(mel.shape)}")
        if features.shape != (mel.shape[0], len(FEATURE_PLANES), p.window_frames, PITCH_BINS):
            raise ShapeError(f"feature block {tuple(features.shape)} does not match mel {tuple(mel.shape)}")

    def embed(self, mel: torch.Tensor, features: torch.Tensor, mask: AblationMask = AblationMask()) -> torch.Tensor:
        """Предпоследний слой (B, acoustic_dim + feature_dim)."""
        self._check(mel, features)
        x = self.input_bn(mel.transpose(1, 3)).transpose(1, 3)
        for block in self.blocks:
            x = block(x)
        acoustic = self.acoustic_fc(x.mean(dim=(2, 3)))
        if not mask.include_acoustic:
            acoustic = torch.zeros_like(acoustic)

        excluded = torch.tensor([not flag for flag in mask.feature_flags()], device=features.device)
        masked = features.masked_fill(excluded.view(1, -1, 1, 1), 0.0)
        # (B, 4, T, 88) -> (B, T, 352) -> среднее по времени
        per_frame = masked.permute(0, 2, 1, 3).reshape(features.shape[0], features.shape[2], -1)
        projected = self.feature_fc(per_frame.mean(dim=1))
        return torch.cat([acoustic, projected], dim=-1)

    def forward(self, mel: torch.Tensor, features: torch.Tensor, mask: AblationMask = AblationMask()) -> torch.Tensor:
        embedding = self.embed(mel, features, mask)
        return self.classifier(self.dropout(embedding))


def articulation_loss(logits: torch.Tensor, labels) -> torch.Tensor:
    """Кросс-энтропия; logits (B, 5) или (5,), labels - коды техник."""
    if logits.dim() == 1:
        logits = logits.unsqueeze(0)
    labels = torch.as_tensor(np.atleast_1d(np.asarray(labels, dtype=np.int64)), device=logits.device)
    if labels.numel() and (labels.min() < 0 or labels.max() >= logits.shape[-1]):
        raise ContractError(f"technique label outside 0..{logits.shape[-1] - 1}")
    return F.cross_entropy(logits, labels)


def window_to_tensors(windows: Sequence[NoteWindow]) -> Tuple[torch.Tensor, torch.Tensor]:
    mel = torch.from_numpy(np.stack([w.mel.values for w in windows]).astype(np.float32))
    features = torch.from_numpy(np.stack([w.features for w in windows]).astype(np.float32))
    return mel, features


@torch.no_grad()
def classify_note(net: ArticulationNet, window: NoteWindow,
                  mask: AblationMask = AblationMask()) -> Tuple[Technique, np.ndarray]:
    """Метка = argmax логитов (при равенстве - младший код) и 256-мерное вложение."""
    labels, embeddings = classify_windows(net, [window], mask)
    return labels[0], embeddings[0]


@torch.no_grad()
def classify_windows(net: ArticulationNet, windows: Sequence[NoteWindow],
                     mask: AblationMask = AblationMask(), batch_size: int = 64) -> Tuple[List[Technique], np.ndarray]:
    was_training = net.training
    net.eval()
    param = next(net.parameters())
    labels: List[Technique] = []
    embeddings = []
    try:
        for i in range(0, len(windows), batch_size):
            mel, features = window_to_tensors(windows[i:i + batch_size])
            mel = mel.to(device=param.device, dtype=param.dtype)
            features = features.to(device=param.device, dtype=param.dtype)
            embedding = net.embed(mel, features, mask)
            logits = net.classifier(embedding)
            # torch.argmax возвращает первый максимум
            labels.extend(Technique(int(k)) for k in torch.argmax(logits, dim=-1).cpu())
            embeddings.append(embedding.cpu().numpy())
    finally:
        net.train(was_training)
    if not embeddings:
        return labels, np.zeros((0, net.params.embedding_dim), dtype=np.float32)
    return labels, np.concatenate(embeddings).astype(np.float32)


class ArticulationClassifier:
    """Обученная сеть + маска абляции: то, что передаётся в attach_techniques."""

    def __init__(self, net: ArticulationNet, mask: AblationMask = AblationMask()):
        self.net = net
        self.mask = mask

    @property
    def window_frames(self) -> int:
        return self.net.params.window_frames

    def classify(self, windows: Sequence[NoteWindow]) -> Tuple[List[Technique], np.ndarray]:
        return classify_windows(self.net, windows, self.mask)
