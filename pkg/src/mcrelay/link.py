"""Monte Carlo simulation of a single diffusion hop.

Each slot the receiver counts molecules from the current and the previous
``isi_length - 1`` emissions (binomial thinning with the slot hit
probabilities), adds Gaussian noise and thresholds the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats

from . import diffusion
from .diffusion import ChannelSpec, ReceptionMode
from .modulation import QcskScheme, Thresholds, detect_array
from .parallel import STREAM_LINK, block_sizes, starmap_jobs, substream


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.0

    def __post_init__(self) -> None:
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")


@dataclass
class SerEstimate:
    errors: int
    trials: int
    confusion: np.ndarray = field(repr=False)

    @classmethod
    def empty(cls, levels: int = 4) -> "SerEstimate":
        return cls(0, 0, np.zeros((levels, levels), dtype=np.int64))

    @classmethod
    def from_decisions(cls, sent: np.ndarray, decided: np.ndarray, levels: int = 4) -> "SerEstimate":
        sent = np.asarray(sent, dtype=np.int64)
        decided = np.asarray(decided, dtype=np.int64)
        conf = np.bincount(sent * levels + decided, minlength=levels * levels)
        conf = conf.reshape(levels, levels).astype(np.int64)
        return cls(int(np.count_nonzero(sent != decided)), int(sent.size), conf)

    @property
    def ser(self) -> float:
        return self.errors / self.trials if self.trials else float("nan")

    @property
    def std_error(self) -> float:
        p = self.ser
        return math.sqrt(p * (1.0 - p) / self.trials) if self.trials else float("nan")

    def confidence_interval(self, level: float = 0.95) -> tuple:
        return clopper_pearson(self.errors, self.trials, level)

    def __add__(self, other: "SerEstimate") -> "SerEstimate":
        return SerEstimate(
            self.errors + other.errors, self.trials + other.trials, self.confusion + other.confusion
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, SerEstimate):
            return NotImplemented
        return (
            self.errors == other.errors
            and self.trials == other.trials
            and np.array_equal(self.confusion, other.confusion)
        )


def clopper_pearson(errors: int, trials: int, level: float = 0.95) -> tuple:
    """Exact binomial confidence interval for errors/trials."""
    if trials <= 0:
        return (0.0, 1.0)
    alpha = 1.0 - level
    lo = 0.0 if errors == 0 else float(stats.beta.ppf(alpha / 2, errors, trials - errors + 1))
    hi = 1.0 if errors == trials else float(stats.beta.ppf(1 - alpha / 2, errors + 1, trials - errors))
    return lo, hi


def merge_estimates(parts: Sequence[SerEstimate]) -> SerEstimate:
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total


@dataclass(frozen=True)
class Hop:
    """Pre-computed per-slot response of one link.

    For absorbing receivers ``response[k]`` is the probability that a
    molecule emitted k slots ago is absorbed in the current counting window;
    for passive receivers it is the expected number of molecules per emitted
    molecule inside the receiver volume at the sampling instant.
    """

    response: tuple
    passive: bool = False

    @classmethod
    def from_channel(
        cls,
        channel: ChannelSpec,
        symbol_duration: float,
        sampling_duration: Optional[float] = None,
        isi_length: Optional[int] = None,
    ) -> "Hop":
        window = symbol_duration if sampling_duration is None else sampling_duration
        if not 0 < window <= symbol_duration:
            raise ValueError("sampling_duration must be in (0, symbol_duration]")
        if channel.reception_mode is ReceptionMode.PASSIVE:
            L = isi_length or diffusion.ISI_MAX_SLOTS
            times = symbol_duration * np.arange(L) + window
            means = [diffusion.passive_expected_count(t, channel, 1) for t in times]
            return cls(tuple(float(m) for m in means), passive=True)
        L = isi_length or diffusion.default_isi_length(channel, symbol_duration)
        if window == symbol_duration:
            p = diffusion.slot_hit_probabilities(channel, symbol_duration, L)
        else:
            starts = symbol_duration * np.arange(L)
            p = np.maximum(
                np.asarray(diffusion.hit_cdf(starts + window, channel))
                - np.asarray(diffusion.hit_cdf(starts, channel)),
                0.0,
            )
        return cls(tuple(float(x) for x in p))

    @property
    def isi_length(self) -> int:
        return len(self.response)

    @property
    def p1(self) -> float:
        return self.response[0]

    def arrivals(self, emissions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Counts per slot for an emission stream (zeros before its start)."""
        emissions = np.asarray(emissions, dtype=np.int64)
        L = self.isi_length
        padded = np.concatenate([np.zeros(L - 1, dtype=np.int64), emissions])
        # row i holds emissions i, i-1, ..., i-L+1 (most recent first)
        history = sliding_window_view(padded, L)[:, ::-1]
        resp = np.asarray(self.response)
        if self.passive:
            return rng.poisson(history @ resp)
        return rng.binomial(history, resp).sum(axis=1)


def sample_arrivals(emission_history, slot_probs, rng: np.random.Generator) -> int:
    """Sum of independent Binomial(M_k, p_k) over a most-recent-first history."""
    p = np.asarray(slot_probs, dtype=float)
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise ValueError("slot probabilities must lie in [0, 1]")
    hist = np.zeros(p.size, dtype=np.int64)
    given = np.asarray(emission_history, dtype=np.int64)[: p.size]
    hist[: given.size] = given
    return int(rng.binomial(hist, p).sum())


def observe(arrivals, noise: NoiseModel, rng: np.random.Generator):
    """Add N(0, sigma^2) counting noise. Negative results are kept."""
    z = rng.standard_normal(np.shape(arrivals))
    out = np.asarray(arrivals, dtype=float) + noise.sigma * z
    return float(out) if np.ndim(out) == 0 else out


def noise_sigma_from_snr(snr_db: Optional[float], scheme: QcskScheme, p1: float) -> float:
    """Noise std so that (mean expected first-slot arrivals) / sigma^2 = SNR.

    ``snr_db`` of None or +inf means a noiseless channel.
    """
    if not 0 < p1 <= 1:
        raise ValueError("p1 must lie in (0, 1]")
    if snr_db is None or snr_db == math.inf:
        return 0.0
    signal = scheme.mean_emission * p1
    return math.sqrt(signal / 10.0 ** (snr_db / 10.0))


@dataclass(frozen=True)
class LinkConfig:
    channel: ChannelSpec
    scheme: QcskScheme
    thresholds: Optional[Thresholds] = None
    symbol_duration: float = 0.15
    sampling_duration: float = 0.15
    n_symbols: int = 50_000
    snr_db: Optional[float] = None
    rng_seed: int = 20170223
    isi_length: Optional[int] = None

    def __post_init__(self) -> None:
        if not 0 < self.sampling_duration <= self.symbol_duration:
            raise ValueError("need 0 < sampling_duration <= symbol_duration")
        if self.n_symbols < 1:
            raise ValueError("n_symbols must be >= 1")

    def hop(self) -> Hop:
        return Hop.from_channel(
            self.channel, self.symbol_duration, self.sampling_duration, self.isi_length
        )

    def noise(self, hop: Optional[Hop] = None) -> NoiseModel:
        hop = hop or self.hop()
        return NoiseModel(noise_sigma_from_snr(self.snr_db, self.scheme, hop.p1))

    def with_(self, **changes) -> "LinkConfig":
        return replace(self, **changes)


def _link_block(config: LinkConfig, hop: Hop, sigma: float, index: int, n_count: int) -> SerEstimate:
    rng = substream(config.rng_seed, STREAM_LINK, index)
    levels = config.scheme.levels
    warm = hop.isi_length
    symbols = rng.integers(0, levels, size=warm + n_count)
    arrivals = hop.arrivals(config.scheme.emissions(symbols), rng)
    obs = observe(arrivals, NoiseModel(sigma), rng)
    decided = detect_array(obs, config.thresholds, levels)
    return SerEstimate.from_decisions(symbols[warm:], decided[warm:], levels)


def simulate_link(config: LinkConfig, workers: int = 1) -> SerEstimate:
    """End-to-end SER of one hop with uniform i.i.d. symbols."""
    if config.thresholds is None:
        raise ValueError("simulate_link needs thresholds")
    config.thresholds.as_array(config.scheme.levels)
    hop = config.hop()
    sigma = config.noise(hop).sigma
    jobs = [(config, hop, sigma, i, n) for i, n in enumerate(block_sizes(config.n_symbols))]
    return merge_estimates(starmap_jobs(_link_block, jobs, workers))
