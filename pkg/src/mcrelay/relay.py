"""Three-node relaying: decode-and-forward, joint MAP reception, amplify-and-forward.

The transmitter emits type-I molecules. The relay counts type I, and in the
next slot re-emits type II. Both molecule types diffuse and are counted
independently, so the relay does not deplete the direct type-I path.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .calibration import calibrate_thresholds, grid_search_on, optimal_concentration
from .diffusion import ChannelSpec, DiffusionEnv, ReceptionMode
from .link import Hop, LinkConfig, SerEstimate, merge_estimates, noise_sigma_from_snr, simulate_link
from .modulation import MoleculeType, QcskScheme, Thresholds, detect_array
from .parallel import (
    STREAM_AF,
    STREAM_REGIONS,
    STREAM_RELAY,
    block_sizes,
    starmap_jobs,
    substream,
)
from .results import SerCurve, argmin_point

AF_GAIN = 50.0
REGION_MARGIN = 0.25
UNLABELED = -1


class RelayScheme(str, enum.Enum):
    SCHEME1 = "1"
    SCHEME2 = "2"
    AF = "af"


@dataclass(frozen=True)
class Topology:
    d_tx_rx: float = 6.0
    d_tx_relay: float = 3.0
    d_relay_rx: Optional[float] = None
    relay_radius: float = 4.0
    receiver_radius: float = 4.0

    def __post_init__(self) -> None:
        if self.d_relay_rx is None:
            object.__setattr__(self, "d_relay_rx", self.d_tx_rx - self.d_tx_relay)
        if min(self.d_tx_rx, self.d_tx_relay, self.d_relay_rx) <= 0:
            raise ValueError("all topology distances must be positive")
        if not math.isclose(self.d_tx_relay + self.d_relay_rx, self.d_tx_rx, rel_tol=0, abs_tol=1e-9):
            raise ValueError("relay must lie on the tx-rx segment (d13 + d32 == d12)")

    def at(self, d_tx_relay: float) -> "Topology":
        return Topology(self.d_tx_rx, d_tx_relay, None, self.relay_radius, self.receiver_radius)


@dataclass(frozen=True)
class RelaySetup:
    """Everything fixed about a relay experiment except SNR, length and seed."""

    topology: Topology = field(default_factory=Topology)
    env: DiffusionEnv = field(default_factory=lambda: DiffusionEnv(100.0, 1))
    scheme_I: QcskScheme = field(default_factory=lambda: QcskScheme(150, 4, MoleculeType.TYPE_I))
    scheme_II: QcskScheme = field(default_factory=lambda: QcskScheme(150, 4, MoleculeType.TYPE_II))
    symbol_duration: float = 0.15
    sampling_duration: float = 0.15
    isi_length: Optional[int] = None
    # type-I path length to the receiver; defaults to d_tx_rx
    direct_distance: Optional[float] = None
    calibration_method: str = "intersection"
    calibration_per_symbol: int = 12_500
    calibration_seed: int = 20170223

    def channel(self, distance: float, radius: float) -> ChannelSpec:
        return ChannelSpec(self.env, distance, radius, ReceptionMode.ABSORBING)

    def _hop(self, distance: float, radius: float) -> Hop:
        return Hop.from_channel(self.channel(distance, radius), self.symbol_duration,
                                self.sampling_duration, self.isi_length)

    def hop_tx_relay(self) -> Hop:
        return self._hop(self.topology.d_tx_relay, self.topology.relay_radius)

    def hop_relay_rx(self) -> Hop:
        return self._hop(self.topology.d_relay_rx, self.topology.receiver_radius)

    def hop_direct(self) -> Hop:
        d = self.direct_distance or self.topology.d_tx_rx
        return self._hop(d, self.topology.receiver_radius)

    def link_config(self, distance: float, radius: float, scheme: QcskScheme) -> LinkConfig:
        return LinkConfig(self.channel(distance, radius), scheme, None, self.symbol_duration,
                          self.sampling_duration, 50_000, None, self.calibration_seed, self.isi_length)

    def calibrate(self, distance: float, radius: float, scheme: QcskScheme) -> Thresholds:
        cfg = self.link_config(distance, radius, scheme)
        return calibrate_thresholds(cfg, self.calibration_method, self.calibration_per_symbol)

    def relay_thresholds(self) -> Thresholds:
        return self.calibrate(self.topology.d_tx_relay, self.topology.relay_radius, self.scheme_I)

    def rx_thresholds(self) -> Thresholds:
        return self.calibrate(self.topology.d_relay_rx, self.topology.receiver_radius, self.scheme_II)

    def noise_sigma(self, snr_db: Optional[float]) -> float:
        """One sigma for every counting node, referenced to the direct tx-rx link."""
        ref = self._hop(self.topology.d_tx_rx, self.topology.receiver_radius)
        return noise_sigma_from_snr(snr_db, self.scheme_I, ref.p1)

    def at(self, d_tx_relay: float) -> "RelaySetup":
        return replace(self, topology=self.topology.at(d_tx_relay))


def with_optimal_concentrations(setup: RelaySetup, candidates: Sequence[int], n_symbols: int, seed: int) -> RelaySetup:
    """Pick the noiseless SER-optimal N separately for each hop."""
    def best(distance: float, radius: float, scheme: QcskScheme) -> int:
        base = setup.link_config(distance, radius, scheme).with_(n_symbols=n_symbols, rng_seed=seed)
        n, _ = optimal_concentration(candidates, distance, None, base, setup.calibration_method,
                                     setup.calibration_per_symbol)
        return n

    t = setup.topology
    n1 = best(t.d_tx_relay, t.relay_radius, setup.scheme_I)
    n2 = best(t.d_relay_rx, t.receiver_radius, setup.scheme_II)
    return replace(setup, scheme_I=replace(setup.scheme_I, base_concentration=n1),
                   scheme_II=replace(setup.scheme_II, base_concentration=n2))


# -- decode-and-forward chain ------------------------------------------------

@dataclass
class _Chain:
    symbols: np.ndarray
    relay_decisions: np.ndarray
    rx_type2: np.ndarray  # receiver type-II observation aligned to symbol index
    rx_type1: Optional[np.ndarray] = None  # direct type-I observation


def _df_chain(setup: RelaySetup, rng: np.random.Generator, n: int, sigma: float,
              relay_th: Thresholds, with_direct: bool, perfect_relay: bool = False) -> _Chain:
    levels = setup.scheme_I.levels
    symbols = rng.integers(0, levels, size=n)
    at_relay = setup.hop_tx_relay().arrivals(setup.scheme_I.emissions(symbols), rng)
    at_relay = at_relay + sigma * rng.standard_normal(n)
    decided = detect_array(at_relay, relay_th, levels)
    if perfect_relay:
        decided = symbols.copy()
    # one slot of relay latency: decision i is emitted in slot i + 1
    em2 = np.concatenate([[0], setup.scheme_II.emissions(decided)])
    at_rx = setup.hop_relay_rx().arrivals(em2, rng) + sigma * rng.standard_normal(n + 1)
    chain = _Chain(symbols, decided, at_rx[1:])
    if with_direct:
        direct = setup.hop_direct().arrivals(setup.scheme_I.emissions(symbols), rng)
        chain.rx_type1 = direct + sigma * rng.standard_normal(n)
    return chain


def _warmup(setup: RelaySetup) -> int:
    return max(setup.hop_tx_relay().isi_length, setup.hop_relay_rx().isi_length,
               setup.hop_direct().isi_length) + 1


def _scheme1_block(setup, relay_th, rx_th, sigma, seed, index, n_count, perfect_relay, perfect_second_hop):
    rng = substream(seed, STREAM_RELAY, index)
    warm = _warmup(setup)
    ch = _df_chain(setup, rng, warm + n_count, sigma, relay_th, False, perfect_relay)
    levels = setup.scheme_I.levels
    final = ch.relay_decisions if perfect_second_hop else detect_array(ch.rx_type2, rx_th, levels)
    return SerEstimate.from_decisions(ch.symbols[warm:], final[warm:], levels)


def simulate_scheme1(
    setup: RelaySetup,
    snr_db: Optional[float],
    n_symbols: int,
    seed: int,
    workers: int = 1,
    perfect_relay: bool = False,
    perfect_second_hop: bool = False,
    sigma: Optional[float] = None,
) -> SerEstimate:
    """Decode-and-forward; the receiver only uses type-II molecules."""
    relay_th, rx_th = setup.relay_thresholds(), setup.rx_thresholds()
    sigma = setup.noise_sigma(snr_db) if sigma is None else sigma
    jobs = [(setup, relay_th, rx_th, sigma, seed, i, n, perfect_relay, perfect_second_hop)
            for i, n in enumerate(block_sizes(n_symbols))]
    return merge_estimates(starmap_jobs(_scheme1_block, jobs, workers))


# -- joint MAP decision regions ---------------------------------------------

@dataclass
class DecisionRegionMap:
    """Symbol labels on the integer grid of (type-I count, type-II count).

    ``labels[i, j]`` is the decision for i type-I and j type-II molecules,
    ``UNLABELED`` where no training sample landed. ``estimated`` marks cells
    labelled from training data (as opposed to filled in by expansion).
    """

    labels: np.ndarray
    estimated: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.labels.shape

    @property
    def is_total(self) -> bool:
        return bool(np.all(self.labels != UNLABELED))

    def lookup(self, type1, type2) -> np.ndarray:
        """Decisions for (possibly noisy, real-valued) observations.

        Observations are rounded to the nearest cell and clamped onto the grid.
        """
        nx, ny = self.labels.shape
        i = np.clip(np.rint(np.asarray(type1, dtype=float)), 0, nx - 1).astype(np.intp)
        j = np.clip(np.rint(np.asarray(type2, dtype=float)), 0, ny - 1).astype(np.intp)
        return self.labels[i, j]


def regions_from_samples(symbols: np.ndarray, type1: np.ndarray, type2: np.ndarray,
                         levels: int = 4, margin: float = REGION_MARGIN) -> DecisionRegionMap:
    """ML (= MAP under uniform priors) labels from noiseless integer training pairs."""
    i = np.rint(type1).astype(np.intp)
    j = np.rint(type2).astype(np.intp)
    if np.any(i < 0) or np.any(j < 0):
        raise ValueError("training counts must be non-negative")
    nx = int(math.ceil((i.max() + 1) * (1 + margin)))
    ny = int(math.ceil((j.max() + 1) * (1 + margin)))
    counts = np.zeros((levels, nx, ny), dtype=np.int64)
    np.add.at(counts, (symbols, i, j), 1)
    per_symbol = counts.sum(axis=(1, 2))
    starved = [s for s in range(levels) if per_symbol[s] == 0]
    if starved:
        raise ValueError(f"no training samples for symbol(s) {starved}; increase n_training")
    freq = counts / per_symbol[:, None, None]
    visited = counts.sum(axis=0) > 0
    labels = np.where(visited, np.argmax(freq, axis=0), UNLABELED).astype(np.int8)
    return DecisionRegionMap(labels, visited.copy())


def _regions_block(setup, relay_th, seed, index, n_count):
    rng = substream(seed, STREAM_REGIONS, index)
    warm = _warmup(setup)
    ch = _df_chain(setup, rng, warm + n_count, 0.0, relay_th, True)
    return ch.symbols[warm:], ch.rx_type1[warm:], ch.rx_type2[warm:]


def estimate_decision_regions(setup: RelaySetup, n_training: int, seed: int, workers: int = 1) -> DecisionRegionMap:
    """Noiseless training run of the DF chain; label cells by empirical MAP."""
    relay_th = setup.relay_thresholds()
    jobs = [(setup, relay_th, seed, i, n) for i, n in enumerate(block_sizes(n_training))]
    parts = starmap_jobs(_regions_block, jobs, workers)
    sym, t1, t2 = (np.concatenate(x) for x in zip(*parts))
    return regions_from_samples(sym, t1, t2, setup.scheme_I.levels)


def expand_regions(regions: DecisionRegionMap) -> DecisionRegionMap:
    """Give every unlabeled cell the label of its nearest labeled cell.

    Distances are Euclidean in count space; ties go to the smaller symbol.
    """
    labels = regions.labels
    present = [s for s in np.unique(labels) if s != UNLABELED]
    if not present:
        raise ValueError("cannot expand an empty decision region map")
    if regions.is_total:
        return DecisionRegionMap(labels.copy(), regions.estimated.copy())
    n_sym = int(max(present)) + 1
    dist = np.full((n_sym,) + labels.shape, np.inf)
    for s in present:
        dist[s] = ndimage.distance_transform_edt(labels != s)
    filled = np.argmin(dist, axis=0).astype(np.int8)
    out = np.where(labels == UNLABELED, filled, labels).astype(np.int8)
    return DecisionRegionMap(out, regions.estimated.copy())


def _scheme2_block(setup, relay_th, regions, sigma, seed, index, n_count):
    rng = substream(seed, STREAM_RELAY, index)
    warm = _warmup(setup)
    ch = _df_chain(setup, rng, warm + n_count, sigma, relay_th, True)
    decided = regions.lookup(ch.rx_type1, ch.rx_type2)
    return SerEstimate.from_decisions(ch.symbols[warm:], decided[warm:], setup.scheme_I.levels)


def simulate_scheme2(
    setup: RelaySetup,
    regions: DecisionRegionMap,
    snr_db: Optional[float],
    n_symbols: int,
    seed: int,
    workers: int = 1,
    sigma: Optional[float] = None,
) -> SerEstimate:
    """Receiver decides on the joint (type-I slot i, type-II slot i+1) count."""
    if not regions.is_total:
        raise ValueError("decision regions must be expanded before use")
    relay_th = setup.relay_thresholds()
    sigma = setup.noise_sigma(snr_db) if sigma is None else sigma
    jobs = [(setup, relay_th, regions, sigma, seed, i, n) for i, n in enumerate(block_sizes(n_symbols))]
    return merge_estimates(starmap_jobs(_scheme2_block, jobs, workers))


# -- amplify-and-forward baseline -------------------------------------------

def relay_af_step(observed, K: float = AF_GAIN):
    """Type-II emission for an observed type-I count: round(K * max(obs, 0))."""
    if not K > 0:
        raise ValueError("K must be positive")
    out = np.rint(K * np.maximum(np.asarray(observed, dtype=float), 0.0)).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def _af_chain(setup: RelaySetup, rng, n: int, sigma: float, K: float):
    symbols = rng.integers(0, setup.scheme_I.levels, size=n)
    at_relay = setup.hop_tx_relay().arrivals(setup.scheme_I.emissions(symbols), rng)
    at_relay = at_relay + sigma * rng.standard_normal(n)
    em2 = np.concatenate([[0], relay_af_step(at_relay, K)])
    at_rx = setup.hop_relay_rx().arrivals(em2, rng) + sigma * rng.standard_normal(n + 1)
    return symbols, at_rx[1:]


def af_thresholds(setup: RelaySetup, K: float = AF_GAIN, n_training: Optional[int] = None) -> Thresholds:
    """Receiver thresholds for the AF chain by grid search on a noiseless run."""
    n = n_training or setup.calibration_per_symbol * setup.scheme_I.levels
    rng = substream(setup.calibration_seed, STREAM_AF)
    warm = _warmup(setup)
    symbols, obs = _af_chain(setup, rng, warm + n, 0.0, K)
    return grid_search_on(symbols[warm:], obs[warm:], setup.scheme_I.levels, 1.0)


def _af_block(setup, th, K, sigma, seed, index, n_count):
    rng = substream(seed, STREAM_RELAY, index)
    warm = _warmup(setup)
    symbols, obs = _af_chain(setup, rng, warm + n_count, sigma, K)
    decided = detect_array(obs, th, setup.scheme_I.levels)
    return SerEstimate.from_decisions(symbols[warm:], decided[warm:], setup.scheme_I.levels)


def simulate_af(setup: RelaySetup, snr_db: Optional[float], n_symbols: int, seed: int,
                K: float = AF_GAIN, workers: int = 1, thresholds: Optional[Thresholds] = None) -> SerEstimate:
    th = thresholds or af_thresholds(setup, K)
    sigma = setup.noise_sigma(snr_db)
    jobs = [(setup, th, K, sigma, seed, i, n) for i, n in enumerate(block_sizes(n_symbols))]
    return merge_estimates(starmap_jobs(_af_block, jobs, workers))


# -- sweeps -----------------------------------------------------------------

def direct_link_config(setup: RelaySetup, n_symbols: int, seed: int) -> LinkConfig:
    t = setup.topology
    cfg = setup.link_config(t.d_tx_rx, t.receiver_radius, setup.scheme_I)
    th = calibrate_thresholds(cfg, setup.calibration_method, setup.calibration_per_symbol)
    return cfg.with_(thresholds=th, n_symbols=n_symbols, rng_seed=seed)


def simulate_direct(setup: RelaySetup, snr_db: Optional[float], n_symbols: int, seed: int, workers: int = 1) -> SerEstimate:
    return simulate_link(direct_link_config(setup, n_symbols, seed).with_(snr_db=snr_db), workers)


def scheme_curve(scheme: RelayScheme, setup: RelaySetup, snr_grid: Sequence[Optional[float]],
                 n_symbols: int, seed: int, n_training: Optional[int] = None,
                 K: float = AF_GAIN, name: Optional[str] = None) -> SerCurve:
    """SER vs SNR for one scheme at the setup's relay location."""
    scheme = RelayScheme(scheme)
    d13 = setup.topology.d_tx_relay
    curve = SerCurve(name or f"scheme{scheme.value}@{d13:g}um", "snr_db", "dB",
                     metadata={"scheme": scheme.value, "relay_location_um": d13})
    if scheme is RelayScheme.SCHEME1:
        curve.metadata["relay_thresholds"] = setup.relay_thresholds().as_tuple()
        curve.metadata["rx_thresholds"] = setup.rx_thresholds().as_tuple()
        run = lambda s: simulate_scheme1(setup, s, n_symbols, seed)
    elif scheme is RelayScheme.SCHEME2:
        raw = estimate_decision_regions(setup, n_training or 4 * n_symbols, seed)
        regions = expand_regions(raw)
        curve.metadata["region_grid"] = list(regions.shape)
        run = lambda s: simulate_scheme2(setup, regions, s, n_symbols, seed)
    else:
        th = af_thresholds(setup, K)
        curve.metadata["rx_thresholds"] = th.as_tuple()
        curve.metadata["K"] = K
        run = lambda s: simulate_af(setup, s, n_symbols, seed, K, thresholds=th)
    for snr in snr_grid:
        curve.add(math.inf if snr is None else snr, run(snr))
    return curve


def _location_job(scheme, setup, location, snr_grid, n_symbols, seed, n_training, K):
    return scheme_curve(scheme, setup.at(location), snr_grid, n_symbols, seed, n_training, K)


@dataclass
class SweepResult:
    curves: Dict[float, SerCurve]
    best_per_snr: Dict[float, float]
    best_overall: float


def relay_location_sweep(
    scheme: RelayScheme,
    locations: Sequence[float],
    snr_grid: Sequence[Optional[float]],
    base: RelaySetup,
    n_symbols: int,
    seed: int,
    n_training: Optional[int] = None,
    K: float = AF_GAIN,
    workers: int = 1,
) -> SweepResult:
    """Every (location, SNR) point with per-location recalibration and shared seeds."""
    for loc in locations:
        if not 0 < loc < base.topology.d_tx_rx:
            raise ValueError(f"relay location {loc} outside (0, {base.topology.d_tx_rx})")
    jobs = [(RelayScheme(scheme), base, float(loc), tuple(snr_grid), n_symbols, seed, n_training, K)
            for loc in locations]
    curves = dict(zip((float(l) for l in locations), starmap_jobs(_location_job, jobs, workers)))
    xs = next(iter(curves.values())).xs()
    best = {x: argmin_point(curves, x) for x in xs}
    return SweepResult(curves, best, argmin_point(curves))
