"""Concentration shift keying: symbol mapping and threshold detection."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


class MoleculeType(str, enum.Enum):
    TYPE_I = "I"
    TYPE_II = "II"


@dataclass(frozen=True)
class QcskScheme:
    """Symbol s is sent as s * base_concentration molecules."""

    base_concentration: int = 150
    levels: int = 4
    molecule_type: MoleculeType = MoleculeType.TYPE_I

    def __post_init__(self) -> None:
        if self.levels not in (2, 4):
            raise ValueError(f"levels must be 2 (BCSK) or 4 (QCSK), got {self.levels}")
        if self.base_concentration < 0:
            raise ValueError("base_concentration must be >= 0")
        object.__setattr__(self, "molecule_type", MoleculeType(self.molecule_type))

    def emissions(self, symbols: np.ndarray) -> np.ndarray:
        return np.asarray(symbols, dtype=np.int64) * self.base_concentration

    @property
    def mean_emission(self) -> float:
        """Average emission over equiprobable symbols."""
        return self.base_concentration * (self.levels - 1) / 2.0


def emit_count(scheme: QcskScheme, symbol: int) -> int:
    if not 0 <= symbol < scheme.levels:
        raise ValueError(f"symbol {symbol} outside [0, {scheme.levels})")
    return symbol * scheme.base_concentration


@dataclass(frozen=True)
class Thresholds:
    """Ordered detection boundaries. BCSK only uses tau1."""

    tau1: float
    tau2: Optional[float] = None
    tau3: Optional[float] = None

    def __post_init__(self) -> None:
        vals = [v for v in (self.tau1, self.tau2, self.tau3) if v is not None]
        if self.tau2 is None and self.tau3 is not None:
            raise ValueError("tau3 given without tau2")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("thresholds must be finite")
        if not vals[0] > 0:
            raise ValueError("tau1 must be positive")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError(f"thresholds must be strictly increasing, got {vals}")

    @classmethod
    def from_sequence(cls, values) -> "Thresholds":
        values = [float(v) for v in values]
        return cls(*values)

    def as_array(self, levels: int = 4) -> np.ndarray:
        taus = [self.tau1, self.tau2, self.tau3][: levels - 1]
        if any(t is None for t in taus):
            raise ValueError(f"thresholds do not cover {levels} levels")
        return np.asarray(taus, dtype=float)

    def as_tuple(self) -> tuple:
        return tuple(v for v in (self.tau1, self.tau2, self.tau3) if v is not None)


def detect_array(observations, thresholds: Thresholds, levels: int = 4) -> np.ndarray:
    """Vectorised detection. A value equal to a threshold goes to the upper symbol."""
    taus = thresholds.as_array(levels)
    return np.searchsorted(taus, np.asarray(observations, dtype=float), side="right")


def detect(observation: float, thresholds: Thresholds, levels: int = 4) -> int:
    return int(detect_array(observation, thresholds, levels))
