import os
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Union

import numpy as np
import torch
from dotenv import load_dotenv

load_dotenv()

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = os.getenv("VPT_CONFIG", "")
DEFAULT_WORKERS = int(os.getenv("VPT_WORKERS", "1"))
RENDER_TIMEOUT = float(os.getenv("VPT_RENDER_TIMEOUT", "120"))


def get_device() -> torch.device:
    name = os.getenv("VPT_DEVICE", "")
    if name:
        return torch.device(name)
    return torch.device("cuda" if torch.cuda.is_available() else "cpu")


def derive_seed(*parts: int) -> int:
    """Детерминированный сид из нескольких целых (seed, step, item...)."""
    seq = np.random.SeedSequence([int(p) % (2 ** 63) for p in parts])
    return int(seq.generate_state(1, dtype=np.uint64)[0] % (2 ** 31 - 1))


def resolve_path(path: Union[str, Path], base: Path) -> Path:
    path = Path(path)
    if not path.is_absolute():
        path = base / path
    return path


def write_jsonl(path: Union[str, Path], records: Iterable[Dict]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def append_jsonl(path: Union[str, Path], record: Dict):
    with Path(path).open("a", encoding="utf-8") as f:
        f.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def iter_jsonl(path: Union[str, Path]) -> Iterator[Dict]:
    with Path(path).open(encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


def read_jsonl(path: Union[str, Path]) -> List[Dict]:
    return list(iter_jsonl(path))
