"""
Иерархия ошибок тулкита. CLI ловит ToolkitError и печатает одну строку.
"""

from typing import Dict, List, Optional


class ToolkitError(Exception):
    """Base class for every error the toolkit raises on purpose."""


class ContractError(ToolkitError):
    pass


class ShapeError(ToolkitError):
    pass


class AudioFormatError(ToolkitError):
    pass


class UnsupportedCodecError(AudioFormatError):
    pass


class MidiParseError(ToolkitError):

    def __init__(self, path, offset: int, reason: str):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{path}: malformed MIDI near byte {offset}: {reason}")


class AnnotationError(ToolkitError):
    pass


class SplitError(ToolkitError):
    pass


class RangeError(ToolkitError):
    pass


class RendererError(ToolkitError):

    def __init__(self, job_id: str, reason: str):
        self.job_id = job_id
        super().__init__(f"render job {job_id}: {reason}")


class RendererEndpointError(RendererError):
    pass


class RendererFormatError(RendererError):
    pass


class CorpusBuildError(ToolkitError):

    def __init__(self, failures: List[Dict]):
        self.failures = failures
        first = failures[0]["message"] if failures else "unknown"
        super().__init__(f"{len(failures)} corpus item(s) failed, first: {first}")


class CheckpointError(ToolkitError):
    pass


class IncompatibleCheckpointError(CheckpointError):
    pass


class ConfigError(ToolkitError):

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        super().__init__(message)
