"""The experiment suite behind the CLI subcommands.

Each ``run_*`` function takes a validated :class:`ExperimentConfig` and
returns ``(csv_text, results)`` where ``results`` is a JSON-able summary
that goes into the run manifest.
"""

from __future__ import annotations

import csv
import io
import math
from typing import Any, Dict, List, Optional, Tuple

from .calibration import calibrate_thresholds, concentration_sweep, estimate_conditional_pdfs, find_crossings
from .config import ExperimentConfig, parse_snr, snr_grid
from .diffusion import ChannelSpec, DiffusionEnv, ReceptionMode
from .link import LinkConfig, simulate_link
from .modulation import MoleculeType, QcskScheme
from .parallel import starmap_jobs
from .relay import RelayScheme, RelaySetup, Topology, relay_location_sweep, scheme_curve, simulate_direct, with_optimal_concentrations
from .results import SerCurve, curves_to_csv

THRESHOLD_COLUMNS = ["distance_um", "concentration", "tau1", "tau2", "tau3", "tau1_kind", "tau2_kind", "tau3_kind"]


def link_config(cfg: ExperimentConfig, distance: Optional[float] = None) -> LinkConfig:
    c = cfg.channel
    channel = ChannelSpec(
        DiffusionEnv(c.diffusion_coefficient, c.dimension),
        c.distance if distance is None else distance,
        c.receiver_radius,
        ReceptionMode(c.reception_mode),
    )
    return LinkConfig(
        channel,
        QcskScheme(cfg.modulation.concentration, cfg.modulation.levels, MoleculeType.TYPE_I),
        None,
        cfg.timing.symbol_duration,
        cfg.timing.sampling_duration,
        cfg.simulation.n_symbols,
        parse_snr(cfg.simulation.snr_db),
        cfg.seed,
        c.isi_length or None,
    )


def per_symbol(cfg: ExperimentConfig) -> int:
    return max(1, cfg.calibration.symbols // cfg.modulation.levels)


def relay_setup(cfg: ExperimentConfig) -> RelaySetup:
    c = cfg.channel
    n, levels = cfg.modulation.concentration, cfg.modulation.levels
    return RelaySetup(
        topology=Topology(c.distance, c.distance / 2, None, c.relay_radius, c.receiver_radius),
        env=DiffusionEnv(c.diffusion_coefficient, c.dimension),
        scheme_I=QcskScheme(n, levels, MoleculeType.TYPE_I),
        scheme_II=QcskScheme(n, levels, MoleculeType.TYPE_II),
        symbol_duration=cfg.timing.symbol_duration,
        sampling_duration=cfg.timing.sampling_duration,
        isi_length=c.isi_length or None,
        calibration_method=cfg.calibration.method,
        calibration_per_symbol=per_symbol(cfg),
        calibration_seed=cfg.seed,
    )


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


# -- calibrate-thresholds ----------------------------------------------------

def _threshold_row(cfg: ExperimentConfig, distance: float) -> List[Any]:
    lc = link_config(cfg, distance).with_(snr_db=None)
    if cfg.calibration.method == "intersection":
        crossings = find_crossings(estimate_conditional_pdfs(lc, per_symbol(cfg)))
        th = calibrate_thresholds(lc, "intersection", per_symbol(cfg))
        kinds = [c.kind for c in crossings]
    else:
        th = calibrate_thresholds(lc, "grid", per_symbol(cfg))
        kinds = ["grid"] * (cfg.modulation.levels - 1)
    taus = list(th.as_tuple()) + [None] * (3 - len(th.as_tuple()))
    kinds = kinds + [""] * (3 - len(kinds))
    return [distance, cfg.modulation.concentration] + taus + kinds


def run_calibrate_thresholds(cfg: ExperimentConfig) -> Tuple[str, Dict[str, Any]]:
    rows = starmap_jobs(_threshold_row, [(cfg, float(d)) for d in cfg.calibration.distances], cfg.workers)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(THRESHOLD_COLUMNS)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    table = {str(r[0]): [v for v in r[2:5] if v is not None] for r in rows}
    flagged = [f"d={r[0]} tau{i + 1}" for r in rows for i, k in enumerate(r[5:8]) if k not in ("", "intersection", "grid")]
    return buf.getvalue(), {"thresholds": table, "flagged": flagged}


# -- sweep-concentration -----------------------------------------------------

def run_sweep_concentration(cfg: ExperimentConfig) -> Tuple[str, Dict[str, Any]]:
    cc = cfg.concentration
    base = link_config(cfg, cc.distance)
    grid: List[Optional[float]] = list(snr_grid(cc.snr_min, cc.snr_max, cc.snr_step))
    if cc.include_noiseless:
        grid = [None] + grid
    thresholds, table = concentration_sweep(base, cc.candidates, grid, cfg.calibration.method,
                                            per_symbol(cfg), cfg.workers)
    curves = []
    best: Dict[str, int] = {}
    if cc.include_noiseless:
        noiseless = SerCurve("noiseless", "concentration", "molecules")
        for n in sorted(table):
            noiseless.add(n, table[n][None])
        curves.append(noiseless)
    for n in sorted(table):
        c = SerCurve(f"N={n}", "snr_db", "dB")
        for s in grid:
            if s is not None:
                c.add(s, table[n][s])
        curves.append(c)
    for s in grid:
        key = "inf" if s is None else repr(float(s))
        # ties go to the smaller N
        best[key] = min(sorted(table), key=lambda n: table[n][s].ser)
    return curves_to_csv(curves), {
        "distance_um": cc.distance,
        "thresholds": {str(n): list(t.as_tuple()) for n, t in thresholds.items()},
        "optimal_concentration": best,
    }


# -- simulate-link -----------------------------------------------------------

def run_simulate_link(cfg: ExperimentConfig) -> Tuple[str, Dict[str, Any]]:
    lc = link_config(cfg)
    th = calibrate_thresholds(lc, cfg.calibration.method, per_symbol(cfg))
    est = simulate_link(lc.with_(thresholds=th), cfg.workers)
    snr = parse_snr(cfg.simulation.snr_db)
    curve = SerCurve("link", "snr_db", "dB")
    curve.add(math.inf if snr is None else snr, est)
    return curves_to_csv([curve]), {
        "distance_um": cfg.channel.distance,
        "thresholds": list(th.as_tuple()),
        "ser": est.ser,
        "confusion": est.confusion.tolist(),
        "isi_length": lc.hop().isi_length,
    }


# -- relay-sweep / compare-schemes ---------------------------------------------

def _relay_grid(cfg: ExperimentConfig) -> List[float]:
    r = cfg.relay
    return snr_grid(r.snr_min, r.snr_max, r.snr_step)


def _prepared_setup(cfg: ExperimentConfig) -> RelaySetup:
    setup = relay_setup(cfg.validate_relay())
    if cfg.relay.hop_concentration == "auto":
        setup = with_optimal_concentrations(setup, cfg.concentration.candidates,
                                            cfg.simulation.n_symbols, cfg.seed)
    return setup


def _locations(cfg: ExperimentConfig, scheme: RelayScheme) -> List[float]:
    return {
        RelayScheme.SCHEME1: cfg.relay.scheme1_locations,
        RelayScheme.SCHEME2: cfg.relay.scheme2_locations,
        RelayScheme.AF: cfg.relay.af_locations,
    }[scheme]


def _sweep(cfg: ExperimentConfig, scheme: RelayScheme, setup: RelaySetup):
    return relay_location_sweep(
        scheme, _locations(cfg, scheme), _relay_grid(cfg), setup, cfg.simulation.n_symbols,
        cfg.seed, cfg.relay.training_symbols, cfg.relay.af_gain, cfg.workers,
    )


def run_relay_sweep(cfg: ExperimentConfig, scheme: str) -> Tuple[str, Dict[str, Any]]:
    scheme = RelayScheme(scheme)
    setup = _prepared_setup(cfg)
    res = _sweep(cfg, scheme, setup)
    curves = [res.curves[k] for k in sorted(res.curves)]
    return curves_to_csv(curves), {
        "scheme": scheme.value,
        "locations_um": sorted(res.curves),
        "optimal_location_per_snr": {repr(k): v for k, v in res.best_per_snr.items()},
        "optimal_location": res.best_overall,
        "concentrations": [setup.scheme_I.base_concentration, setup.scheme_II.base_concentration],
        "curve_metadata": {repr(k): _jsonable(c.metadata) for k, c in sorted(res.curves.items())},
    }


def _jsonable(meta: Dict[str, Any]) -> Dict[str, Any]:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in meta.items()}


def _direct_curve(setup: RelaySetup, grid, n_symbols: int, seed: int) -> SerCurve:
    c = SerCurve(f"direct@{setup.topology.d_tx_rx:g}um", "snr_db", "dB", metadata={"scheme": "direct"})
    for s in grid:
        c.add(s, simulate_direct(setup, s, n_symbols, seed))
    return c


def run_compare_schemes(cfg: ExperimentConfig) -> Tuple[str, Dict[str, Any]]:
    setup = _prepared_setup(cfg)
    grid = _relay_grid(cfg)
    n, seed = cfg.simulation.n_symbols, cfg.seed
    placement = {}
    for scheme, key in ((RelayScheme.SCHEME1, "scheme1_location"), (RelayScheme.SCHEME2, "scheme2_location")):
        loc = getattr(cfg.relay, key)
        if loc == "auto":
            loc = _sweep(cfg, scheme, setup).best_overall
        placement[scheme] = float(loc)
    placement[RelayScheme.AF] = setup.topology.d_tx_rx / 2
    jobs = [(scheme_curve, (s, setup.at(placement[s]), tuple(grid), n, seed, cfg.relay.training_symbols,
                            cfg.relay.af_gain, f"{'af' if s is RelayScheme.AF else 'scheme' + s.value}@{placement[s]:g}um"))
            for s in (RelayScheme.SCHEME1, RelayScheme.SCHEME2, RelayScheme.AF)]
    jobs.insert(0, (_direct_curve, (setup, tuple(grid), n, seed)))
    curves = starmap_jobs(_call, jobs, cfg.workers)
    target = cfg.relay.reference_ser
    required = {c.name: c.required_snr(target) for c in curves}
    direct = required[curves[0].name]
    gains = {name: (direct - v if math.isfinite(direct) and math.isfinite(v) else None)
             for name, v in required.items() if name != curves[0].name}
    return curves_to_csv(curves), {
        "placement_um": {s.value: v for s, v in placement.items()},
        "reference_ser": target,
        "required_snr_db": {k: (v if math.isfinite(v) else "inf") for k, v in required.items()},
        "gain_over_direct_db": gains,
    }


def _call(fn, args):
    return fn(*args)
