"""Experiment configuration.

Config files are flat TOML with dotted keys, e.g.::

    seed = 20170223
    channel.dimension = 1
    relay.scheme1_locations = [2, 3, 4]

Every key is optional; unset keys take the defaults below. A run
manifest (JSON) is also accepted as a config file and reproduces its run.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

DEFAULT_SEED = 20170223


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending dotted key."""

    def __init__(self, field_name: str, message: str) -> None:
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ChannelSection:
    diffusion_coefficient: float = 100.0
    dimension: int = 1
    distance: float = 6.0
    receiver_radius: float = 4.0
    relay_radius: float = 4.0
    reception_mode: str = "absorbing"
    isi_length: int = 0  # 0 selects the automatic truncation rule


@dataclass
class TimingSection:
    symbol_duration: float = 0.15
    sampling_duration: float = 0.15


@dataclass
class ModulationSection:
    levels: int = 4
    concentration: int = 150


@dataclass
class SimulationSection:
    n_symbols: int = 50_000
    snr_db: Union[float, str] = "inf"


@dataclass
class CalibrationSection:
    method: str = "intersection"
    symbols: int = 50_000
    distances: List[float] = field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0, 5.0, 6.0])


@dataclass
class ConcentrationSection:
    candidates: List[int] = field(default_factory=lambda: [50, 100, 150, 300])
    distance: float = 3.0
    snr_min: float = -5.0
    snr_max: float = 40.0
    snr_step: float = 5.0
    include_noiseless: bool = True


@dataclass
class RelaySection:
    snr_min: float = -10.0
    snr_max: float = 15.0
    snr_step: float = 5.0
    scheme1_locations: List[float] = field(default_factory=lambda: [2.0, 3.0, 4.0])
    scheme2_locations: List[float] = field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0, 5.0])
    af_locations: List[float] = field(default_factory=lambda: [3.0])
    af_gain: float = 50.0
    training_symbols: int = 200_000
    # "fixed" uses modulation.concentration on both hops, "auto" optimises N per hop
    hop_concentration: str = "fixed"
    # compare-schemes relay placement; "auto" runs the location sweep first
    scheme1_location: Union[float, str] = "auto"
    scheme2_location: Union[float, str] = "auto"
    reference_ser: float = 1e-2


@dataclass
class ExperimentConfig:
    seed: int = DEFAULT_SEED
    workers: int = 1
    channel: ChannelSection = field(default_factory=ChannelSection)
    timing: TimingSection = field(default_factory=TimingSection)
    modulation: ModulationSection = field(default_factory=ModulationSection)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    calibration: CalibrationSection = field(default_factory=CalibrationSection)
    concentration: ConcentrationSection = field(default_factory=ConcentrationSection)
    relay: RelaySection = field(default_factory=RelaySection)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def validate(self) -> "ExperimentConfig":
        c = self.channel
        _check(c.diffusion_coefficient > 0, "channel.diffusion_coefficient", "must be > 0")
        _check(c.dimension in (1, 3), "channel.dimension", "must be 1 or 3")
        _check(c.distance > 0, "channel.distance", "must be > 0")
        _check(c.receiver_radius > 0, "channel.receiver_radius", "must be > 0")
        _check(c.relay_radius > 0, "channel.relay_radius", "must be > 0")
        _check(c.reception_mode in ("absorbing", "passive"), "channel.reception_mode",
               "must be 'absorbing' or 'passive'")
        _check(c.reception_mode == "absorbing" or c.dimension == 3, "channel.reception_mode",
               "passive reception needs channel.dimension = 3")
        _check(0 <= c.isi_length <= 1000, "channel.isi_length", "must be in [0, 1000]")
        t = self.timing
        _check(t.symbol_duration > 0, "timing.symbol_duration", "must be > 0")
        _check(0 < t.sampling_duration <= t.symbol_duration, "timing.sampling_duration",
               "must be in (0, symbol_duration]")
        _check(self.modulation.levels in (2, 4), "modulation.levels", "must be 2 or 4")
        _check(self.modulation.concentration >= 0, "modulation.concentration", "must be >= 0")
        _check(self.simulation.n_symbols >= 1, "simulation.n_symbols", "must be >= 1")
        parse_snr(self.simulation.snr_db, "simulation.snr_db")
        _check(self.calibration.method in ("intersection", "grid"), "calibration.method",
               "must be 'intersection' or 'grid'")
        _check(self.calibration.symbols >= 4 * self.modulation.levels, "calibration.symbols", "too small")
        _check(all(d > 0 for d in self.calibration.distances), "calibration.distances", "must be > 0")
        _check(len(self.concentration.candidates) > 0, "concentration.candidates", "must be non-empty")
        _check(all(n > 0 for n in self.concentration.candidates), "concentration.candidates", "must be > 0")
        _check(self.concentration.distance > 0, "concentration.distance", "must be > 0")
        for sec in ("concentration", "relay"):
            s = getattr(self, sec)
            _check(s.snr_step > 0, f"{sec}.snr_step", "must be > 0")
            _check(s.snr_max >= s.snr_min, f"{sec}.snr_max", "must be >= snr_min")
        r = self.relay
        for key in ("scheme1_locations", "scheme2_locations", "af_locations"):
            locs = getattr(r, key)
            _check(len(locs) > 0, f"relay.{key}", "must be non-empty")
            _check(all(x > 0 for x in locs), f"relay.{key}", "locations must be > 0")
        for key in ("scheme1_location", "scheme2_location"):
            v = getattr(r, key)
            _check(v == "auto" or (isinstance(v, (int, float)) and v > 0),
                   f"relay.{key}", "must be 'auto' or a positive location")
        _check(r.af_gain > 0, "relay.af_gain", "must be > 0")
        _check(r.training_symbols >= 100, "relay.training_symbols", "must be >= 100")
        _check(r.hop_concentration in ("fixed", "auto"), "relay.hop_concentration", "must be 'fixed' or 'auto'")
        _check(0 < r.reference_ser < 1, "relay.reference_ser", "must be in (0, 1)")
        _check(self.workers >= 1, "workers", "must be >= 1")
        _check(0 <= self.seed < 2**64, "seed", "must be an unsigned 64-bit integer")
        return self

    def validate_relay(self) -> "ExperimentConfig":
        """Extra checks for relay experiments: every location inside the link."""
        d = self.channel.distance
        r = self.relay
        for key in ("scheme1_locations", "scheme2_locations", "af_locations"):
            _check(all(x < d for x in getattr(r, key)), f"relay.{key}",
                   f"locations must lie strictly between 0 and channel.distance ({d})")
        for key in ("scheme1_location", "scheme2_location"):
            v = getattr(r, key)
            _check(v == "auto" or v < d, f"relay.{key}", f"must be 'auto' or below channel.distance ({d})")
        _check(self.channel.reception_mode == "absorbing", "channel.reception_mode",
               "relay experiments need absorbing reception")
        return self


def _check(ok: bool, name: str, message: str) -> None:
    if not ok:
        raise ConfigError(name, message)


def parse_snr(value, name: str = "snr_db") -> Optional[float]:
    """Number in dB, or "inf"/"none" for a noiseless channel (returned as None)."""
    if value is None:
        return None
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "+inf", "none", "noiseless"):
            return None
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(name, f"not a number: {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"not a number: {value!r}")
    if value == math.inf:
        return None
    if not math.isfinite(value):
        raise ConfigError(name, "must be finite or 'inf'")
    return float(value)


def snr_grid(lo: float, hi: float, step: float) -> List[float]:
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 10) for i in range(n)]


def _coerce(value: Any, target: Any, name: str) -> Any:
    if isinstance(target, bool):
        if not isinstance(value, bool):
            raise ConfigError(name, "expected true/false")
        return value
    if isinstance(target, int):
        if isinstance(value, bool) or not (isinstance(value, int) or (isinstance(value, float) and value.is_integer())):
            raise ConfigError(name, f"expected an integer, got {value!r}")
        return int(value)
    if isinstance(target, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(name, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(target, str):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if not isinstance(value, str):
            raise ConfigError(name, f"expected a string, got {value!r}")
        return value
    if isinstance(target, list):
        if not isinstance(value, list):
            raise ConfigError(name, "expected a list")
        elem = target[0] if target else 0.0
        return [_coerce(v, elem, f"{name}[{i}]") for i, v in enumerate(value)]
    raise ConfigError(name, "unsupported type")


def _apply(obj: Any, data: Dict[str, Any], prefix: str = "") -> None:
    known = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if key not in known:
            raise ConfigError(name, "unknown key")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(name, "expected a section")
            _apply(current, value, name + ".")
        else:
            setattr(obj, key, _coerce(value, current, name))


def from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    cfg = ExperimentConfig()
    _apply(cfg, data)
    return cfg.validate()


def load_config(path: Optional[Union[str, Path]]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().validate()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("--config", str(exc)) from None
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON: {exc}") from None
        data = data.get("config", data)
    else:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("--config", f"invalid config syntax: {exc}") from None
    return from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    """Render as the flat dotted-key format accepted by load_config."""
    lines = []

    def emit(prefix: str, obj: Any) -> None:
        for f in fields(obj):
            v = getattr(obj, f.name)
            if dataclasses.is_dataclass(v):
                emit(f"{prefix}{f.name}.", v)
            else:
                lines.append(f"{prefix}{f.name} = {json.dumps(v)}")

    emit("", cfg)
    return "\n".join(lines) + "\n"
