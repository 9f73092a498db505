"""
Глобальный конфиг: JSON, секция на модуль, переопределения section.key=value, SHA-256 хеш.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

from audio.augmentation import EffectChainConfig
from audio.frontend import MelConfig
from common.errors import ConfigError
from common.utils import DEFAULT_CONFIG_PATH
from decoding.notes import DecodeConfig
from evaluation.metrics import ToleranceSpec
from nets.articulation import ArticulationParams
from nets.transcription import TranscriptionParams
from synth.corpus import CorpusSpec, ScaleSpec
from training.schedule import ARTICULATION_DEFAULTS, TRANSCRIPTION_DEFAULTS, TrainConfig

logger = logging.getLogger(__name__)

SECTIONS = {
    "mel": MelConfig(),
    "augmentation": EffectChainConfig(),
    "corpus": CorpusSpec(),
    "scales": ScaleSpec(),
    "transcription": TranscriptionParams(),
    "articulation": ArticulationParams(),
    "decode": DecodeConfig(),
    "tolerance": ToleranceSpec(),
    "train_transcription": TRANSCRIPTION_DEFAULTS,
    "train_articulation": ARTICULATION_DEFAULTS,
}
SEEDED_SECTIONS = ("corpus", "scales", "train_transcription", "train_articulation")


@dataclass(frozen=True)
class GlobalConfig:
    mel: MelConfig = MelConfig()
    augmentation: EffectChainConfig = EffectChainConfig()
    corpus: CorpusSpec = CorpusSpec()
    scales: ScaleSpec = ScaleSpec()
    transcription: TranscriptionParams = TranscriptionParams()
    articulation: ArticulationParams = ArticulationParams()
    decode: DecodeConfig = DecodeConfig()
    tolerance: ToleranceSpec = ToleranceSpec()
    train_transcription: TrainConfig = TRANSCRIPTION_DEFAULTS
    train_articulation: TrainConfig = ARTICULATION_DEFAULTS
    seed: int = 0
    source: Optional[str] = field(default=None, compare=False)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {name: _plain(asdict(getattr(self, name))) for name in SECTIONS}
        data["seed"] = self.seed
        return data

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def meta(self) -> Dict[str, Any]:
        return {"config_hash": self.config_hash, "seed": self.seed, "config": self.source or "<defaults>"}

    def save(self, path: Union[str, Path]):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False, sort_keys=True), encoding="utf-8")


def _plain(value):
    # Technique и прочие IntEnum -> имя, кортежи -> списки
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "label") and isinstance(value, int):
        return value.label
    return value


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_overrides(pairs: Sequence[str]) -> Dict[str, Dict[str, Any]]:
    """["train_transcription.steps=500", "seed=3"] -> {"train_transcription": {"steps": 500}, "": {"seed": 3}}"""
    result: Dict[str, Dict[str, Any]] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override '{pair}' is not key=value", key=pair)
        key, raw = pair.split("=", 1)
        section, _, name = key.strip().rpartition(".")
        result.setdefault(section, {})[name] = _parse_value(raw.strip())
    return result


def _merge(data: Dict[str, Any], overrides: Dict[str, Dict[str, Any]]) -> Dict[str, Any]:
    merged = {k: dict(v) if isinstance(v, dict) else v for k, v in data.items()}
    for section, values in overrides.items():
        if section == "":
            merged.update(values)
        else:
            merged.setdefault(section, {})
            if not isinstance(merged[section], dict):
                raise ConfigError(f"'{section}' is not a section", key=section)
            merged[section].update(values)
    return merged


def build_config(data: Dict[str, Any], source: Optional[str] = None) -> GlobalConfig:
    unknown = [k for k in data if k not in SECTIONS and k != "seed"]
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}", key=unknown[0])
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"seed must be an integer, got {seed!r}", key="seed")

    resolved = {}
    for name, default in SECTIONS.items():
        values = data.get(name, {}) or {}
        if not isinstance(values, dict):
            raise ConfigError(f"section '{name}' must be an object", key=name)
        known = {f.name for f in fields(default)}
        bad = [k for k in values if k not in known]
        if bad:
            raise ConfigError(f"unknown key(s) in '{name}': {sorted(bad)}", key=f"{name}.{bad[0]}")
        if name in SEEDED_SECTIONS and "seed" not in values:
            values = {**values, "seed": seed}
        try:
            resolved[name] = replace(default, **values)
        except ConfigError:
            raise
        except Exception as e:
            raise ConfigError(f"invalid '{name}' section: {e}", key=name)
    return GlobalConfig(seed=seed, source=source, **resolved)


def load_config(path: Optional[Union[str, Path]] = None, overrides: Sequence[str] = (),
                seed: Optional[int] = None) -> GlobalConfig:
    """Файл (или VPT_CONFIG, или значения по умолчанию) + переопределения + --seed."""
    path = path or DEFAULT_CONFIG_PATH or None
    data: Dict[str, Any] = {}
    if path:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})")
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
    data = _merge(data, parse_overrides(overrides))
    if seed is not None:
        data["seed"] = seed
    config = build_config(data, str(path) if path else None)
    logger.debug(f"Конфиг: hash={config.config_hash[:12]}, seed={config.seed}")
    return config
