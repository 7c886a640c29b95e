"""Empirical calibration of detection thresholds and base concentration."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .link import Hop, LinkConfig, NoiseModel, SerEstimate, observe, simulate_link
from .modulation import QcskScheme, Thresholds
from .parallel import STREAM_CALIBRATION, STREAM_GRID_HOLDOUT, starmap_jobs, substream
from .results import SerCurve

log = logging.getLogger(__name__)

SMOOTHING_BINS = 5


@dataclass(frozen=True)
class ConditionalHistograms:
    """Per-symbol observation histograms on a shared unit-width binning.

    ``freqs[s, b]`` is the relative frequency of bin ``b`` given symbol ``s``;
    ``centers[b]`` is the bin midpoint.
    """

    centers: np.ndarray
    freqs: np.ndarray
    means: np.ndarray
    bin_width: float = 1.0

    @property
    def levels(self) -> int:
        return self.freqs.shape[0]

    @property
    def support(self) -> Tuple[float, float]:
        return float(self.centers[0] - self.bin_width / 2), float(self.centers[-1] + self.bin_width / 2)

    def smoothed(self, width: int = SMOOTHING_BINS) -> np.ndarray:
        kernel = np.ones(width) / width
        return np.array([np.convolve(f, kernel, mode="same") for f in self.freqs])

    @classmethod
    def from_samples(cls, samples: Sequence[np.ndarray], bin_width: float = 1.0) -> "ConditionalHistograms":
        lo = min(float(np.min(s)) for s in samples)
        hi = max(float(np.max(s)) for s in samples)
        first = np.floor(lo / bin_width) * bin_width
        n_bins = int(np.floor((hi - first) / bin_width + 0.5)) + 1
        edges = first - bin_width / 2 + bin_width * np.arange(n_bins + 1)
        freqs = np.array([np.histogram(s, bins=edges)[0] / len(s) for s in samples])
        centers = first + bin_width * np.arange(n_bins)
        means = np.array([float(np.mean(s)) for s in samples])
        return cls(centers, freqs, means, bin_width)


@dataclass(frozen=True)
class Crossing:
    tau: float
    kind: str  # "intersection", "gap-midpoint" or "mean-midpoint"

    @property
    def flagged(self) -> bool:
        return self.kind != "intersection"


def conditional_samples(config: LinkConfig, symbol: int, n: int, hop: Optional[Hop] = None) -> np.ndarray:
    """Observations for a fixed current symbol behind random earlier symbols."""
    hop = hop or config.hop()
    rng = substream(config.rng_seed, STREAM_CALIBRATION, symbol)
    L = hop.isi_length
    history = rng.integers(0, config.scheme.levels, size=(n, L))
    history[:, 0] = symbol
    em = config.scheme.emissions(history)
    resp = np.asarray(hop.response)
    if hop.passive:
        arrivals = rng.poisson(em @ resp)
    else:
        arrivals = rng.binomial(em, resp).sum(axis=1)
    return observe(arrivals, config.noise(hop), rng)


def estimate_conditional_pdfs(config: LinkConfig, n_per_symbol: int = 12_500) -> ConditionalHistograms:
    hop = config.hop()
    samples = [conditional_samples(config, s, n_per_symbol, hop) for s in range(config.scheme.levels)]
    return ConditionalHistograms.from_samples(samples)


def _crossing(h: ConditionalHistograms, smooth: np.ndarray, upper: int) -> Crossing:
    lower = upper - 1
    diff = smooth[lower] - smooth[upper]
    x = h.centers
    nz = np.flatnonzero(diff)
    candidates = []
    for a, b in zip(nz, nz[1:]):
        if diff[a] > 0 and diff[b] < 0:
            candidates.append(x[a] + (x[b] - x[a]) * diff[a] / (diff[a] - diff[b]))
    target = 0.5 * (h.means[lower] + h.means[upper])
    if candidates:
        best = min(candidates, key=lambda c: (abs(c - target), c))
        return Crossing(float(best), "intersection")
    lo_top = x[np.flatnonzero(h.freqs[lower])[-1]]
    hi_bottom = x[np.flatnonzero(h.freqs[upper])[0]]
    if hi_bottom > lo_top:
        return Crossing(float(0.5 * (lo_top + hi_bottom)), "gap-midpoint")
    return Crossing(float(target), "mean-midpoint")


def find_crossings(h: ConditionalHistograms) -> List[Crossing]:
    smooth = h.smoothed()
    return [_crossing(h, smooth, s) for s in range(1, h.levels)]


def _ordered(taus: List[float]) -> List[float]:
    out = list(taus)
    for i in range(1, len(out)):
        if out[i] <= out[i - 1]:
            out[i] = np.nextafter(out[i - 1], np.inf)
    return out


def thresholds_from_pdf_intersections(h: ConditionalHistograms) -> Thresholds:
    """Thresholds at the crossings of adjacent smoothed conditional PDFs."""
    crossings = find_crossings(h)
    for i, c in enumerate(crossings, start=1):
        if c.flagged:
            log.warning("tau%d fell back to %s (%.3f)", i, c.kind, c.tau)
    taus = _ordered([c.tau for c in crossings])
    if taus[0] <= 0:
        raise ValueError("degenerate histograms: no positive first threshold")
    return Thresholds.from_sequence(taus)


def optimal_partition(sent: np.ndarray, obs: np.ndarray, levels: int, grid: np.ndarray) -> Tuple[np.ndarray, int]:
    """Exhaustive best ordered threshold tuple on ``grid`` (exact DP).

    Maximises the number of correct decisions; among maximisers the
    lexicographically smallest tuple is returned.
    """
    T = levels - 1
    if grid.size < T:
        raise ValueError("grid too small for the number of thresholds")
    below = []
    for s in range(levels):
        ys = np.sort(obs[sent == s])
        below.append(np.searchsorted(ys, grid, side="left").astype(np.int64))
    # gain[i][j]: extra correct decisions from placing tau_{i+1} at grid[j]
    gain = [below[i] - below[i + 1] for i in range(T)]
    # best[i][j]: best total of gains i..T-1 with tau_{i+1} at grid[j]
    best = [None] * T
    best[T - 1] = gain[T - 1].copy()
    for i in range(T - 2, -1, -1):
        nxt = best[i + 1]
        suffix = np.full(grid.size, np.iinfo(np.int64).min // 2, dtype=np.int64)
        # suffix[j] = max over j' > j of nxt[j']
        suffix[:-1] = np.maximum.accumulate(nxt[::-1])[::-1][1:]
        best[i] = gain[i] + suffix
    chosen = []
    start = 0
    target = None
    for i in range(T):
        seg = best[i][start:]
        if target is None:
            target = int(seg.max())
        j = start + int(np.flatnonzero(seg == target)[0])
        chosen.append(j)
        target -= int(gain[i][j])
        start = j + 1
    correct = int(best[0][chosen[0]] + np.count_nonzero(sent == levels - 1))
    return grid[chosen], correct


def holdout_stream(config: LinkConfig, n_symbols: int) -> Tuple[np.ndarray, np.ndarray]:
    hop = config.hop()
    rng = substream(config.rng_seed, STREAM_GRID_HOLDOUT)
    warm = hop.isi_length
    symbols = rng.integers(0, config.scheme.levels, size=warm + n_symbols)
    arrivals = hop.arrivals(config.scheme.emissions(symbols), rng)
    obs = observe(arrivals, config.noise(hop), rng)
    return symbols[warm:], obs[warm:]


def thresholds_by_grid_search(
    config: LinkConfig, grid_resolution: float = 1.0, n_symbols: Optional[int] = None
) -> Thresholds:
    """Thresholds minimising empirical SER over a grid, on a held-out stream."""
    if not grid_resolution > 0:
        raise ValueError("grid_resolution must be positive")
    sent, obs = holdout_stream(config, n_symbols or config.n_symbols)
    return grid_search_on(sent, obs, config.scheme.levels, grid_resolution)


def grid_search_on(sent: np.ndarray, obs: np.ndarray, levels: int, grid_resolution: float = 1.0) -> Thresholds:
    lo = max(grid_resolution, np.floor(obs.min() / grid_resolution) * grid_resolution)
    hi = max(lo + levels * grid_resolution, obs.max() + grid_resolution)
    grid = lo + grid_resolution * np.arange(int(np.ceil((hi - lo) / grid_resolution)) + 1)
    taus, _ = optimal_partition(sent, obs, levels, grid)
    return Thresholds.from_sequence(taus)


@lru_cache(maxsize=256)
def _calibrate_cached(config: LinkConfig, method: str, n_per_symbol: int) -> Thresholds:
    if method == "intersection":
        return thresholds_from_pdf_intersections(estimate_conditional_pdfs(config, n_per_symbol))
    if method == "grid":
        return thresholds_by_grid_search(config, 1.0, n_per_symbol * config.scheme.levels)
    raise ValueError(f"unknown calibration method {method!r}")


def calibrate_thresholds(config: LinkConfig, method: str = "intersection", n_per_symbol: int = 12_500) -> Thresholds:
    """Noiseless threshold calibration for the link in ``config``."""
    clean = config.with_(snr_db=None, thresholds=None)
    return _calibrate_cached(clean, method, n_per_symbol)


def _evaluate_candidate(base: LinkConfig, n: int, snr_grid: Tuple, method: str, n_per_symbol: int):
    cfg = base.with_(scheme=QcskScheme(n, base.scheme.levels, base.scheme.molecule_type))
    th = calibrate_thresholds(cfg, method, n_per_symbol)
    cfg = cfg.with_(thresholds=th)
    return th, [simulate_link(cfg.with_(snr_db=s)) for s in snr_grid]


def concentration_sweep(
    base: LinkConfig,
    candidates: Sequence[int],
    snr_grid: Sequence[Optional[float]],
    method: str = "intersection",
    n_per_symbol: int = 12_500,
    workers: int = 1,
) -> Tuple[dict, dict]:
    """SER for every (candidate N, SNR); thresholds recalibrated per candidate.

    Returns ({N: Thresholds}, {N: {snr: SerEstimate}}).
    """
    snr_grid = tuple(snr_grid)
    jobs = [(base, int(n), snr_grid, method, n_per_symbol) for n in candidates]
    out = starmap_jobs(_evaluate_candidate, jobs, workers)
    thresholds = {int(n): th for n, (th, _) in zip(candidates, out)}
    table = {int(n): dict(zip(snr_grid, ests)) for n, (_, ests) in zip(candidates, out)}
    return thresholds, table


def optimal_concentration(
    candidates: Sequence[int],
    d: float,
    snr_db: Optional[float],
    base: LinkConfig,
    method: str = "intersection",
    n_per_symbol: int = 12_500,
    workers: int = 1,
) -> Tuple[int, SerCurve]:
    """Argmin-SER base concentration; ties go to the smaller N."""
    if not candidates:
        raise ValueError("no candidate concentrations")
    base = base.with_(channel=base.channel.with_distance(d))
    _, table = concentration_sweep(base, candidates, [snr_db], method, n_per_symbol, workers)
    curve = SerCurve("concentration", "concentration", "molecules",
                     metadata={"distance_um": d, "snr_db": snr_db})
    for n in sorted(table):
        curve.add(n, table[n][snr_db])
    best = min(sorted(table), key=lambda n: table[n][snr_db].ser)
    return best, curve
