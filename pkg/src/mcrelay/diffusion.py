"""Diffusion and first-hitting-time kernels.

All functions are pure. Distances are in micrometres, times in seconds and
diffusion coefficients in um^2/s.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

# Truncation rule for the ISI memory: stop once the next slot carries less
# than this fraction of the first-slot probability, never beyond the cap.
ISI_TAIL_RATIO = 1e-4
ISI_MAX_SLOTS = 20


class ReceptionMode(str, enum.Enum):
    ABSORBING = "absorbing"
    PASSIVE = "passive"


@dataclass(frozen=True)
class DiffusionEnv:
    diffusion_coefficient: float = 100.0
    dimension: int = 3

    def __post_init__(self) -> None:
        if not self.diffusion_coefficient > 0:
            raise ValueError("diffusion_coefficient must be positive")
        if self.dimension not in (1, 3):
            raise ValueError(f"dimension must be 1 or 3, got {self.dimension}")


@dataclass(frozen=True)
class ChannelSpec:
    """One diffusion link: transmitter point source to a receiver."""

    env: DiffusionEnv
    distance: float
    receiver_radius: float = 4.0
    reception_mode: ReceptionMode = ReceptionMode.ABSORBING

    def __post_init__(self) -> None:
        if not self.distance > 0:
            raise ValueError("distance must be positive")
        if not self.receiver_radius > 0:
            raise ValueError("receiver_radius must be positive")
        object.__setattr__(self, "reception_mode", ReceptionMode(self.reception_mode))
        if self.reception_mode is ReceptionMode.PASSIVE and self.env.dimension != 3:
            raise ValueError("passive reception needs a 3-D environment")

    @property
    def capture_fraction(self) -> float:
        """Probability that an emitted molecule is ever absorbed."""
        if self.env.dimension == 1:
            return 1.0
        return self.receiver_radius / (self.distance + self.receiver_radius)

    def with_distance(self, distance: float) -> "ChannelSpec":
        return ChannelSpec(self.env, distance, self.receiver_radius, self.reception_mode)


def erfc(x):
    """Complementary error function (scalar or array)."""
    out = special.erfc(x)
    return float(out) if np.ndim(out) == 0 else out


def concentration(r, t, env: DiffusionEnv):
    """Point-source concentration per emitted molecule at radius r and time t."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("time must be positive")
    if np.any(np.asarray(r) < 0):
        raise ValueError("radius must be non-negative")
    four_dt = 4.0 * env.diffusion_coefficient * t
    out = (math.pi * four_dt) ** (-env.dimension / 2.0) * np.exp(-np.square(r) / four_dt)
    return float(out) if np.ndim(out) == 0 else out


def _require_dimension(spec: ChannelSpec, dim: int) -> None:
    if spec.env.dimension != dim:
        raise ValueError(f"operation needs a {dim}-D channel, got {spec.env.dimension}-D")


def _first_hit_density(t, spec: ChannelSpec):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("time must be positive")
    d, D = spec.distance, spec.env.diffusion_coefficient
    return d / np.sqrt(4.0 * math.pi * D * t**3) * np.exp(-(d**2) / (4.0 * D * t))


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


def pdf_hit_1d(t, spec: ChannelSpec):
    """First-passage density of a 1-D walker to a point at distance d."""
    _require_dimension(spec, 1)
    return _scalar(_first_hit_density(t, spec))


def rate_hit_3d(t, spec: ChannelSpec):
    """Hitting rate onto an absorbing sphere in 3-D."""
    _require_dimension(spec, 3)
    return _scalar(spec.capture_fraction * _first_hit_density(t, spec))


def _erfc_cdf(t, spec: ChannelSpec, scale: float):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    d, D = spec.distance, spec.env.diffusion_coefficient
    with np.errstate(divide="ignore"):
        arg = d / np.sqrt(4.0 * D * t)
    # erfc(inf) == 0 handles t == 0 exactly
    return _scalar(scale * special.erfc(arg))


def cdf_hit_1d(t, spec: ChannelSpec):
    _require_dimension(spec, 1)
    return _erfc_cdf(t, spec, 1.0)


def cdf_hit_3d(t, spec: ChannelSpec):
    _require_dimension(spec, 3)
    return _erfc_cdf(t, spec, spec.capture_fraction)


def hit_cdf(t, spec: ChannelSpec):
    """Dimension-dispatching cumulative hit probability."""
    if spec.env.dimension == 1:
        return cdf_hit_1d(t, spec)
    return cdf_hit_3d(t, spec)


def passive_expected_count(t: float, spec: ChannelSpec, emitted: int) -> float:
    """Expected molecules inside a passive spherical receiver at time t."""
    if spec.reception_mode is not ReceptionMode.PASSIVE or spec.env.dimension != 3:
        raise ValueError("passive_expected_count needs a passive 3-D channel")
    volume = 4.0 / 3.0 * math.pi * spec.receiver_radius**3
    return emitted * volume * concentration(spec.distance, t, spec.env)


def slot_hit_probabilities(spec: ChannelSpec, slot_duration: float, isi_length: int) -> np.ndarray:
    """Per-slot arrival probabilities p_1..p_L of a molecule emitted at slot start.

    p_k = F(k t_s) - F((k - 1) t_s), so partial sums telescope to F(k t_s).
    """
    if spec.reception_mode is not ReceptionMode.ABSORBING:
        raise ValueError("slot probabilities are defined for absorbing receivers only")
    if not slot_duration > 0:
        raise ValueError("slot_duration must be positive")
    if isi_length < 1:
        raise ValueError("isi_length must be >= 1")
    edges = slot_duration * np.arange(isi_length + 1, dtype=float)
    cdf = np.asarray(hit_cdf(edges, spec), dtype=float)
    return np.maximum(np.diff(cdf), 0.0)


def default_isi_length(spec: ChannelSpec, slot_duration: float) -> int:
    """Smallest L with p_{L+1} < 1e-4 p_1, capped at ISI_MAX_SLOTS."""
    p = slot_hit_probabilities(spec, slot_duration, ISI_MAX_SLOTS + 1)
    for length in range(1, ISI_MAX_SLOTS + 1):
        if p[length] < ISI_TAIL_RATIO * p[0]:
            return length
    return ISI_MAX_SLOTS
