"""
Рендереры корпуса: встроенный параметрический синтез и внешний хост (команда или HTTP).
Внешний рендер идёт через файл-дескриптор задания и возвращённый WAV.
"""

import json
import logging
import shlex
import shutil
import subprocess
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import requests
import soundfile as sf

from audio.frontend import CANONICAL_RATE, AudioClip, load_audio, save_audio
from annotations.notes import NoteAnnotation
from annotations.technique import Technique
from common.errors import RendererEndpointError, RendererError, RendererFormatError
from common.utils import RENDER_TIMEOUT
from .patches import DEFAULT_PATCHES, TechniquePatch
from .render import render_performance

logger = logging.getLogger(__name__)


@dataclass
class RenderJob:
    job_id: str
    midi_path: Path
    techniques: List[Technique]
    out_wav: Path
    notes: Sequence[NoteAnnotation] = field(default_factory=list)
    seed: int = 0
    rate: int = CANONICAL_RATE
    channels: int = 1
    dry: bool = True

    @property
    def descriptor_path(self) -> Path:
        return Path(str(self.out_wav) + ".job.json")

    def descriptor(self) -> Dict:
        names = [t.label for t in self.techniques]
        return {
            "job_id": self.job_id,
            "midi": str(self.midi_path),
            "technique": names[0] if len(names) == 1 else names,
            "out_wav": str(self.out_wav),
            "rate": self.rate,
            "channels": self.channels,
            "dry": self.dry,
        }


class Renderer(ABC):
    """Базовый интерфейс рендерера: задание -> моно-клип 16 кГц, записанный в job.out_wav."""

    name: str = "renderer"

    @abstractmethod
    def render(self, job: RenderJob) -> AudioClip:
        pass

    def check(self):
        """Проверка доступности рендерера до начала сборки."""
        pass


class BuiltinRenderer(Renderer):
    name = "builtin"

    def __init__(self, patches: Optional[Mapping[Technique, TechniquePatch]] = None):
        self.patches = dict(patches or DEFAULT_PATCHES)

    def render(self, job: RenderJob) -> AudioClip:
        if not job.notes:
            raise RendererError(job.job_id, "built-in renderer needs the note list")
        clip = render_performance(job.notes, seed=job.seed, patches=self.patches)
        save_audio(job.out_wav, clip)
        return clip


class ExternalRenderer(Renderer):
    """
    Внешний хост VST. endpoint - либо shell-команда (путь к дескриптору добавляется последним
    аргументом, хост пишет out_wav), либо http(s) URL (дескриптор уходит POST-ом, тело ответа - WAV).
    """

    name = "external"

    def __init__(self, endpoint: str, timeout: float = RENDER_TIMEOUT):
        self.endpoint = endpoint
        self.timeout = timeout

    @property
    def is_http(self) -> bool:
        return self.endpoint.startswith(("http://", "https://"))

    def check(self):
        if self.is_http:
            return
        argv = shlex.split(self.endpoint)
        if not argv or shutil.which(argv[0]) is None:
            raise RendererEndpointError("-", f"renderer command not found: {self.endpoint}")

    def render(self, job: RenderJob) -> AudioClip:
        return external_render(job, self.endpoint, self.timeout)


def _write_descriptor(job: RenderJob) -> Path:
    path = job.descriptor_path
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(job.descriptor(), ensure_ascii=False, indent=2), encoding="utf-8")
    return path


def _run_command(job: RenderJob, endpoint: str, descriptor: Path, timeout: float):
    argv = shlex.split(endpoint)
    if not argv or shutil.which(argv[0]) is None:
        raise RendererEndpointError(job.job_id, f"renderer command not found: {endpoint}")
    try:
        proc = subprocess.run(argv + [str(descriptor)], capture_output=True, text=True, timeout=timeout)
    except subprocess.TimeoutExpired:
        raise RendererError(job.job_id, f"renderer timed out after {timeout:g} s")
    if proc.returncode != 0:
        tail = (proc.stderr or proc.stdout or "").strip().splitlines()[-1:] or [""]
        raise RendererError(job.job_id, f"renderer exited with {proc.returncode}: {tail[0]}")


def _post_http(job: RenderJob, endpoint: str, timeout: float):
    try:
        response = requests.post(endpoint, json=job.descriptor(), timeout=timeout)
    except requests.Timeout:
        raise RendererError(job.job_id, f"renderer timed out after {timeout:g} s")
    except requests.RequestException as e:
        raise RendererEndpointError(job.job_id, f"renderer unreachable: {e}")
    if response.status_code != 200:
        raise RendererError(job.job_id, f"renderer answered HTTP {response.status_code}")
    job.out_wav.parent.mkdir(parents=True, exist_ok=True)
    job.out_wav.write_bytes(response.content)


def external_render(job: RenderJob, endpoint: str, timeout: float = RENDER_TIMEOUT) -> AudioClip:
    descriptor = _write_descriptor(job)
    logger.info(f"Задание {job.job_id} отправлено внешнему рендереру")

    if endpoint.startswith(("http://", "https://")):
        _post_http(job, endpoint, timeout)
    else:
        _run_command(job, endpoint, descriptor, timeout)

    if not job.out_wav.exists():
        raise RendererError(job.job_id, f"renderer produced no file at {job.out_wav}")
    try:
        info = sf.info(str(job.out_wav))
    except Exception as e:
        raise RendererFormatError(job.job_id, f"unreadable WAV ({e})")
    if info.samplerate != job.rate or info.channels != job.channels:
        raise RendererFormatError(
            job.job_id,
            f"expected {job.rate} Hz / {job.channels} ch, got {info.samplerate} Hz / {info.channels} ch",
        )
    return load_audio(job.out_wav, job.rate)
