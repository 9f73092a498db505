"""
Общий контейнер чекпоинтов для обеих сетей: веса + параметры + MelConfig + хеш конфига.
model_hash (SHA-256 секции, параметров и MelConfig) сверяется при каждой загрузке.
"""

import hashlib
import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Optional, Union

import torch

from audio.frontend import MelConfig
from common.errors import CheckpointError, IncompatibleCheckpointError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "violin-technique-checkpoint"
CHECKPOINT_VERSION = 2
TRANSCRIPTION_SECTION = "transcription"
ARTICULATION_SECTION = "articulation"


def model_hash(section: str, params: Dict[str, Any], mel_config: Dict[str, Any]) -> str:
    canonical = json.dumps({"section": section, "params": params, "mel_config": mel_config},
                           sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_payload(section: str, model: torch.nn.Module, params, mel_config: MelConfig,
                  config_hash: str, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    params_dict, mel_dict = asdict(params), asdict(mel_config)
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "section": section,
        "params": params_dict,
        "mel_config": mel_dict,
        "model_hash": model_hash(section, params_dict, mel_dict),
        "config_hash": config_hash,
        "state_dict": {k: v.detach().cpu().clone() for k, v in model.state_dict().items()},
        "extra": dict(extra or {}),
    }


def write_payload(path: Union[str, Path], payload: Dict[str, Any]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        # запись через файловый объект: имя архива внутри zip не зависит от имени файла
        with tmp.open("wb") as fh:
            torch.save(payload, fh)
        tmp.replace(path)
    except OSError as e:
        raise CheckpointError(f"cannot write checkpoint {path}: {e}")
    return path


def save_checkpoint(path: Union[str, Path], section: str, model: torch.nn.Module, params,
                    mel_config: MelConfig, config_hash: str, extra: Optional[Dict[str, Any]] = None) -> Path:
    path = write_payload(path, build_payload(section, model, params, mel_config, config_hash, extra))
    logger.info(f"Чекпоинт [{section}] сохранён: {path}")
    return path


def load_checkpoint(path: Union[str, Path], section: str, mel_config: Optional[MelConfig] = None,
                    config_hash: Optional[str] = None) -> Dict[str, Any]:
    """
    Читает контейнер и проверяет формат, версию и секцию.
    mel_config / config_hash, если заданы, обязаны совпасть с сохранёнными.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(str(path), map_location="cpu", weights_only=False)
    except Exception as e:
        raise CheckpointError(f"{path}: unreadable checkpoint ({e})")

    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise IncompatibleCheckpointError(f"{path}: not a toolkit checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise IncompatibleCheckpointError(
            f"{path}: checkpoint version {payload.get('version')}, toolkit reads {CHECKPOINT_VERSION}"
        )
    if payload.get("section") != section:
        raise IncompatibleCheckpointError(f"{path}: holds a '{payload.get('section')}' model, expected '{section}'")
    if payload.get("model_hash") != model_hash(section, payload.get("params"), payload.get("mel_config")):
        raise IncompatibleCheckpointError(f"{path}: model hash does not match the stored params and mel config")
    if mel_config is not None and payload["mel_config"] != asdict(mel_config):
        raise IncompatibleCheckpointError(f"{path}: trained with a different mel front end")
    if config_hash is not None and payload.get("config_hash") != config_hash:
        raise IncompatibleCheckpointError(
            f"{path}: config hash {payload.get('config_hash', '')[:12]} does not match {config_hash[:12]}"
        )
    return payload


def mel_config_of(payload: Dict[str, Any]) -> MelConfig:
    return MelConfig(**payload["mel_config"])
