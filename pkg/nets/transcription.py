"""
CRNN транскрипции: четыре головы (onset, offset, frame, velocity) по 88 высотам.
Каждая голова - свой акустический стек (4 conv-блока + 2 biGRU), затем рекомбинация.
"""

import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from annotations.notes import PITCH_BINS
from annotations.targets import TargetRolls
from audio.frontend import MelTensor
from common.errors import ContractError, IncompatibleCheckpointError, ShapeError

logger = logging.getLogger(__name__)

HEADS = ("onset", "offset", "frame", "velocity")


@dataclass(frozen=True)
class TranscriptionParams:
    conv_channels: Tuple[int, ...] = (48, 48, 96, 96)
    gru_width: int = 256
    fc_width: int = 768
    in_channels: int = 3
    n_mels: int = 229
    output_dim: int = PITCH_BINS
    dropout: float = 0.2
    # условные входы рекомбинации берутся без градиента
    detach_conditioning: bool = True

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        if len(self.conv_channels) != 4:
            raise ContractError(f"transcription net has four conv blocks, got {len(self.conv_channels)}")
        if self.output_dim != PITCH_BINS:
            raise ContractError(f"output_dim must be {PITCH_BINS}")
        if self.gru_width < 1 or self.fc_width < 1:
            raise ContractError("gru_width and fc_width must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError(f"dropout {self.dropout} outside [0, 1)")
        if self.n_mels >> len(self.conv_channels) < 1:
            raise ContractError(f"{self.n_mels} mel bins do not survive {len(self.conv_channels)} poolings")

    @classmethod
    def from_dict(cls, data: Dict) -> "TranscriptionParams":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class FramePredictions:
    onset_reg: np.ndarray
    offset_reg: np.ndarray
    frame_act: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        shapes = {a.shape for a in self.planes()}
        if len(shapes) != 1:
            raise ShapeError(f"head outputs disagree in shape: {sorted(shapes)}")
        shape = shapes.pop()
        if len(shape) != 2 or shape[1] != PITCH_BINS:
            raise ShapeError(f"head outputs must be T x {PITCH_BINS}, got {shape}")

    @property
    def n_frames(self) -> int:
        return self.frame_act.shape[0]

    def planes(self) -> Tuple[np.ndarray, ...]:
        # порядок плоскостей признаков для классификатора техник
        return self.onset_reg, self.offset_reg, self.frame_act, self.velocity

    def stack(self) -> np.ndarray:
        return np.stack(self.planes()).astype(np.float32)

    def segment(self, start: int, n_frames: int) -> np.ndarray:
        """Окно 4 x n_frames x 88, за краем - нули."""
        block = np.zeros((4, n_frames, PITCH_BINS), dtype=np.float32)
        stop = min(self.n_frames, start + n_frames)
        if stop > start >= 0:
            block[:, : stop - start] = self.stack()[:, start:stop]
        return block


@dataclass
class LossBreakdown:
    frame_bce: float
    onset_bce: float
    offset_bce: float
    velocity_mse: float
    technique_ce: Optional[float] = None

    @property
    def total(self) -> float:
        parts = [self.frame_bce, self.onset_bce, self.offset_bce, self.velocity_mse]
        if self.technique_ce is not None:
            parts.append(self.technique_ce)
        return float(sum(parts))

    def to_dict(self) -> Dict[str, float]:
        data = {k: v for k, v in asdict(self).items() if v is not None}
        data["total"] = self.total
        return data

    @classmethod
    def from_tensors(cls, losses: Dict[str, torch.Tensor]) -> "LossBreakdown":
        return cls(
            frame_bce=float(losses["frame_bce"]),
            onset_bce=float(losses["onset_bce"]),
            offset_bce=float(losses["offset_bce"]),
            velocity_mse=float(losses["velocity_mse"]),
            technique_ce=float(losses["technique_ce"]) if "technique_ce" in losses else None,
        )


class ConvBlock(nn.Module):

    def __init__(self, in_channels: int, out_channels: int, dropout: float):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.relu(self.bn1(self.conv1(x)))
        x = F.relu(self.bn2(self.conv2(x)))
        # пулинг только по частоте, ось времени сохраняется
        x = F.avg_pool2d(x, kernel_size=(1, 2))
        return self.dropout(x)


class AcousticStack(nn.Module):
    """(B, C, T, F) -> (B, T, 88): conv-блоки, FC, две biGRU, сигмоида."""

    def __init__(self, params: TranscriptionParams):
        super().__init__()
        channels = (params.in_channels,) + params.conv_channels
        self.blocks = nn.ModuleList(
            ConvBlock(channels[i], channels[i + 1], params.dropout) for i in range(len(params.conv_channels))
        )
        freq = params.n_mels
        for _ in params.conv_channels:
            freq //= 2
        self.fc = nn.Linear(params.conv_channels[-1] * freq, params.fc_width, bias=False)
        self.bn = nn.BatchNorm1d(params.fc_width)
        self.gru = nn.GRU(params.fc_width, params.gru_width, num_layers=2, batch_first=True,
                          bidirectional=True, dropout=0.0)
        self.out = nn.Linear(2 * params.gru_width, params.output_dim)
        self.dropout = nn.Dropout(params.dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            x = block(x)
        b, c, t, f = x.shape
        x = x.transpose(1, 2).reshape(b, t, c * f)
        x = self.fc(x)
        x = F.relu(self.bn(x.transpose(1, 2)).transpose(1, 2))
        x = self.dropout(x)
        x, _ = self.gru(x)
        x = self.dropout(x)
        return torch.sigmoid(self.out(x))


class RecombinationHead(nn.Module):
    """Промежуточные выходы голов -> FC -> две biGRU -> 88 сигмоид."""

    def __init__(self, in_planes: int, params: TranscriptionParams):
        super().__init__()
        self.fc = nn.Linear(in_planes * params.output_dim, 2 * params.gru_width)
        self.gru = nn.GRU(2 * params.gru_width, params.gru_width, num_layers=2, batch_first=True,
                          bidirectional=True)
        self.out = nn.Linear(2 * params.gru_width, params.output_dim)
        self.dropout = nn.Dropout(params.dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.relu(self.fc(x))
        x, _ = self.gru(x)
        x = self.dropout(x)
        return torch.sigmoid(self.out(x))


class TranscriptionNet(nn.Module):

    def __init__(self, params: TranscriptionParams = TranscriptionParams()):
        super().__init__()
        self.params = params
        self.input_bn = nn.BatchNorm2d(params.n_mels)
        self.onset_stack = AcousticStack(params)
        self.offset_stack = AcousticStack(params)
        self.frame_stack = AcousticStack(params)
        self.velocity_stack = AcousticStack(params)
        self.onset_head = RecombinationHead(2, params)
        self.offset_head = RecombinationHead(1, params)
        self.frame_head = RecombinationHead(3, params)

    def _condition(self, x: torch.Tensor) -> torch.Tensor:
        return x.detach() if self.params.detach_conditioning else x

    def forward(self, mel: torch.Tensor) -> Dict[str, torch.Tensor]:
        """mel: (B, C, T, F) -> словарь голов, каждая (B, T, 88)."""
        if mel.dim() != 4 or mel.shape[1] != self.params.in_channels or mel.shape[3] != self.params.n_mels:
            raise ShapeError(
                f"expected (B, {self.params.in_channels}, T, {self.params.n_mels}) mel, got {tuple(mel.shape)}"
            )
        # нормировка по мел-полосам: (B, C, T, F) -> (B, F, T, C)
        x = self.input_bn(mel.transpose(1, 3)).transpose(1, 3)

        velocity = self.velocity_stack(x)
        onset_pre = self.onset_stack(x)
        offset_pre = self.offset_stack(x)
        frame_pre = self.frame_stack(x)

        onset = self.onset_head(torch.cat([onset_pre, self._condition(velocity)], dim=-1))
        offset = self.offset_head(offset_pre)
        frame = self.frame_head(torch.cat([frame_pre, self._condition(onset), self._condition(offset)], dim=-1))
        return {"onset": onset, "offset": offset, "frame": frame, "velocity": velocity}


def mel_to_tensor(mel: MelTensor, params: TranscriptionParams) -> torch.Tensor:
    if mel.n_channels != params.in_channels or mel.n_bins != params.n_mels:
        raise ShapeError(
            f"mel has {mel.n_channels} channels x {mel.n_bins} bins, "
            f"net expects {params.in_channels} x {params.n_mels}"
        )
    return torch.from_numpy(np.ascontiguousarray(mel.values, dtype=np.float32)).unsqueeze(0)


def outputs_to_predictions(outputs: Dict[str, torch.Tensor], index: int = 0) -> FramePredictions:
    arrays = {k: v[index].detach().cpu().numpy().astype(np.float32) for k, v in outputs.items()}
    return FramePredictions(
        onset_reg=arrays["onset"], offset_reg=arrays["offset"],
        frame_act=arrays["frame"], velocity=arrays["velocity"],
    )


@torch.no_grad()
def predict(net: TranscriptionNet, mel: MelTensor, device: Optional[torch.device] = None) -> FramePredictions:
    """Инференс на одном клипе в режиме eval."""
    device = device or next(net.parameters()).device
    was_training = net.training
    net.eval()
    try:
        x = mel_to_tensor(mel, net.params).to(device=device, dtype=next(net.parameters()).dtype)
        return outputs_to_predictions(net(x))
    finally:
        net.train(was_training)


def _to_tensor(value) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value
    return torch.as_tensor(np.asarray(value, dtype=np.float32))


def compute_losses(outputs: Dict[str, torch.Tensor], targets: Dict[str, torch.Tensor]) -> Dict[str, torch.Tensor]:
    """
    outputs/targets: onset, offset, frame, velocity тензоры одной формы.
    BCE по frame/onset/offset (регрессионные роллы - мягкие цели), MSE скорости только там, где onset-цель > 0.
    """
    for head in HEADS:
        if outputs[head].shape != targets[head].shape:
            raise ShapeError(f"{head}: prediction {tuple(outputs[head].shape)} vs target {tuple(targets[head].shape)}")

    losses = {
        "frame_bce": F.binary_cross_entropy(outputs["frame"], targets["frame"]),
        "onset_bce": F.binary_cross_entropy(outputs["onset"], targets["onset"]),
        "offset_bce": F.binary_cross_entropy(outputs["offset"], targets["offset"]),
    }
    mask = (targets["onset"] > 0).to(outputs["velocity"].dtype)
    n_masked = mask.sum()
    if n_masked > 0:
        diff = (outputs["velocity"] - targets["velocity"]) ** 2
        losses["velocity_mse"] = (diff * mask).sum() / n_masked
    else:
        losses["velocity_mse"] = outputs["velocity"].sum() * 0.0
    losses["total"] = losses["frame_bce"] + losses["onset_bce"] + losses["offset_bce"] + losses["velocity_mse"]
    return losses


def rolls_to_tensors(targets: TargetRolls) -> Dict[str, torch.Tensor]:
    return {
        "onset": _to_tensor(targets.onset_reg),
        "offset": _to_tensor(targets.offset_reg),
        "frame": _to_tensor(targets.frame),
        "velocity": _to_tensor(targets.velocity),
    }


def transcription_loss(pred: FramePredictions, targets: TargetRolls) -> LossBreakdown:
    outputs = {
        "onset": _to_tensor(pred.onset_reg),
        "offset": _to_tensor(pred.offset_reg),
        "frame": _to_tensor(pred.frame_act),
        "velocity": _to_tensor(pred.velocity),
    }
    return LossBreakdown.from_tensors(compute_losses(outputs, rolls_to_tensors(targets)))


def init_from_checkpoint(net: TranscriptionNet, path: Union[str, Path]) -> int:
    """
    Инициализация весами, обученными вне тулкита (например, на фортепиано).
    Принимает контейнер тулкита или голый state_dict; формы всех тензоров обязаны совпасть.
    """
    path = Path(path)
    try:
        payload = torch.load(str(path), map_location="cpu", weights_only=False)
    except Exception as e:
        raise IncompatibleCheckpointError(f"{path}: cannot read initialization weights ({e})")
    state = payload.get("state_dict", payload.get("model", payload)) if isinstance(payload, dict) else None
    if not isinstance(state, dict):
        raise IncompatibleCheckpointError(f"{path}: no state dict inside")

    own = net.state_dict()
    mismatched = [k for k, v in state.items() if k in own and tuple(own[k].shape) != tuple(v.shape)]
    if mismatched:
        raise IncompatibleCheckpointError(f"{path}: shape mismatch for {mismatched[:5]}")
    usable = {k: v for k, v in state.items() if k in own}
    if not usable:
        raise IncompatibleCheckpointError(f"{path}: no tensor matches the transcription net")
    missing = [k for k in own if k not in usable]
    if missing:
        logger.warning(f"Инициализация {path.name}: {len(missing)} тензоров остались случайными")
    net.load_state_dict(usable, strict=False)
    logger.info(f"Инициализация из {path.name}: загружено {len(usable)} тензоров")
    return len(usable)
