from enum import IntEnum
from typing import List, Union


class Technique(IntEnum):
    """Коды фиксированы: 0 detache, 1 flageolet, 2 spiccato, 3 pizzicato, 4 none."""

    DETACHE = 0
    FLAGEOLET = 1
    SPICCATO = 2
    PIZZICATO = 3
    NONE = 4

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value: Union[str, int, "Technique"]) -> "Technique":
        if isinstance(value, Technique):
            return value
        if isinstance(value, str):
            key = value.strip().lower().replace("é", "e")
            if key.isdigit():
                return cls(int(key))
            try:
                return cls[key.upper()]
            except KeyError:
                raise ValueError(f"unknown technique '{value}'")
        return cls(int(value))


PLAYED_TECHNIQUES: List[Technique] = [
    Technique.DETACHE,
    Technique.FLAGEOLET,
    Technique.SPICCATO,
    Technique.PIZZICATO,
]
NUM_TECHNIQUES = len(Technique)
