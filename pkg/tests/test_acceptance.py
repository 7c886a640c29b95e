"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``criterion N: PASS/FAIL`` line and then asserts at the
stated tolerance. The lines are repeated in the terminal summary.
"""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from mcrelay.calibration import calibrate_thresholds, concentration_sweep
from mcrelay.cli import main
from mcrelay.diffusion import ChannelSpec, DiffusionEnv, cdf_hit_1d, cdf_hit_3d, rate_hit_3d
from mcrelay.link import Hop, LinkConfig, NoiseModel, observe, simulate_link
from mcrelay.modulation import QcskScheme, Thresholds
from mcrelay.relay import RelayScheme, RelaySetup, relay_location_sweep, scheme_curve, simulate_direct
from mcrelay.results import SerCurve

SEED = 20170223
N_SYMBOLS = 50_000
ENV1 = DiffusionEnv(100.0, 1)
ENV3 = DiffusionEnv(100.0, 3)
REFERENCE_THRESHOLDS = {
    1: (80, 213, 345),
    2: (96, 210, 318),
    3: (108, 198, 287),
    4: (116, 187, 285),
    5: (122, 180, 235),
    6: (127, 177, 214),
}


def ci_separated(best, worst):
    """95% Clopper-Pearson intervals do not overlap."""
    return best.confidence_interval()[1] < worst.confidence_interval()[0]


def test_criterion_1_channel_math(criterion):
    spec = ChannelSpec(ENV3, 6.0, 4.0)
    asym = abs(cdf_hit_3d(1e15, spec) - 0.4)
    worst = 0.0
    for t in np.logspace(-3, 2, 20):
        q, _ = integrate.quad(rate_hit_3d, 0, t, args=(spec,), limit=200, epsabs=1e-12)
        worst = max(worst, abs(q - cdf_hit_3d(t, spec)))
    one_d = abs(cdf_hit_1d(1e15, ChannelSpec(ENV1, 6.0)) - 1.0)
    ok = asym < 1e-6 and worst <= 1e-6 and one_d < 1e-6
    criterion("1", ok, f"|F3(inf)-0.4|={asym:.1e}, max quad diff={worst:.1e}, |F1(inf)-1|={one_d:.1e}")
    assert ok


def test_criterion_2_sampler_statistics(criterion):
    n = 100_000
    hop = Hop.from_channel(ChannelSpec(ENV1, 3.0), 0.15)
    p = np.asarray(hop.response)
    M = 150
    warm = hop.isi_length
    counts = hop.arrivals(np.full(n + warm, M), np.random.default_rng(SEED))[warm:].astype(float)
    # cumulants of a sum of independent binomials
    k2 = float(np.sum(M * p * (1 - p)))
    k4 = float(np.sum(M * p * (1 - p) * (1 - 6 * p * (1 - p))))
    mean_z = (counts.mean() - M * p.sum()) / math.sqrt(k2 / n)
    var_z = (counts.var(ddof=1) - k2) / math.sqrt((k4 + 2 * k2**2) / n)

    sigma = 3.7
    noise = observe(np.zeros(n), NoiseModel(sigma), np.random.default_rng(SEED + 1))
    nmean_z = noise.mean() / (sigma / math.sqrt(n))
    nvar_z = (noise.var(ddof=1) - sigma**2) / (sigma**2 * math.sqrt(2 / n))
    zs = [mean_z, var_z, nmean_z, nvar_z]
    ok = all(abs(z) < 4 for z in zs)
    criterion("2", ok, "z-scores " + ", ".join(f"{z:+.2f}" for z in zs))
    assert ok


def test_criterion_3_threshold_trends(criterion):
    calibrated = {}
    for d in REFERENCE_THRESHOLDS:
        cfg = LinkConfig(ChannelSpec(ENV1, float(d)), QcskScheme(150), n_symbols=N_SYMBOLS, rng_seed=SEED)
        calibrated[d] = calibrate_thresholds(cfg).as_tuple()
    t1 = [calibrated[d][0] for d in REFERENCE_THRESHOLDS]
    t2 = [calibrated[d][1] for d in REFERENCE_THRESHOLDS]
    t3 = [calibrated[d][2] for d in REFERENCE_THRESHOLDS]
    trend = (all(b > a for a, b in zip(t1, t1[1:])) and all(b < a for a, b in zip(t2, t2[1:]))
             and all(b < a for a, b in zip(t3, t3[1:])))
    rel = max(abs(g / w - 1) for d in REFERENCE_THRESHOLDS for g, w in zip(calibrated[d], REFERENCE_THRESHOLDS[d]))
    ok = trend and rel <= 0.20
    rows = "; ".join(f"{d}um {tuple(round(v, 1) for v in calibrated[d])}" for d in REFERENCE_THRESHOLDS)
    criterion("3", ok, f"trend={trend}, max rel dev={rel:.3f}; {rows}")
    assert ok


CANDIDATES = [50, 100, 150, 300]
CONC_GRID = [None] + [float(s) for s in range(-5, 41, 5)]


def concentration_outcome(n_symbols):
    base = LinkConfig(ChannelSpec(ENV1, 3.0), QcskScheme(150), n_symbols=n_symbols, rng_seed=SEED)
    _, table = concentration_sweep(base, CANDIDATES, CONC_GRID)
    argmins, separated = {}, True
    for s in CONC_GRID:
        sers = {n: table[n][s] for n in CANDIDATES}
        best = min(CANDIDATES, key=lambda n: sers[n].ser)
        worst = max(CANDIDATES, key=lambda n: sers[n].ser)
        argmins[s] = best
        separated &= ci_separated(sers[150], sers[worst])
    return argmins, separated


def test_criterion_4_concentration_optimum(criterion):
    argmins, separated = concentration_outcome(N_SYMBOLS)
    ok = all(n == 150 for n in argmins.values()) and separated
    detail = ", ".join(f"{'inf' if s is None else int(s)}dB->N={n}" for s, n in argmins.items())
    criterion("4", ok, f"argmin {detail}; 150 CI-separated from worst: {separated}")
    assert ok


def test_criterion_4_smoke_variant(criterion):
    full, _ = concentration_outcome(N_SYMBOLS)
    smoke, _ = concentration_outcome(10_000)
    ok = smoke == full and all(n == 150 for n in smoke.values())
    criterion("4 (10000-symbol smoke)", ok,
              f"argmin preserved: {smoke == full}; argmins {sorted(set(smoke.values()))}")
    assert ok


RELAY_GRID = [float(s) for s in range(-10, 16, 5)]
SETUP = RelaySetup()


def location_outcome(scheme, locations, want):
    res = relay_location_sweep(scheme, locations, RELAY_GRID, SETUP, N_SYMBOLS, SEED,
                               n_training=4 * N_SYMBOLS)
    separated = True
    for x in RELAY_GRID:
        pts = {loc: c.at(x) for loc, c in res.curves.items()}
        worst = max(locations, key=lambda l: pts[l].ser)
        separated &= pts[want].ci_high < pts[worst].ci_low
    ok = all(v == want for v in res.best_per_snr.values()) and separated
    detail = ", ".join(f"{int(x)}dB->{loc:g}um" for x, loc in res.best_per_snr.items())
    sers = "; ".join(f"{loc:g}um SER@15dB={c.at(15.0).ser:.4f}" for loc, c in sorted(res.curves.items()))
    return ok, f"argmin {detail}; CI-separated from worst: {separated}; {sers}"


def test_criterion_5_scheme1_optimum(criterion):
    ok, detail = location_outcome(RelayScheme.SCHEME1, [2.0, 3.0, 4.0], 3.0)
    criterion("5", ok, detail)
    assert ok


def test_criterion_6_scheme2_optimum(criterion):
    ok, detail = location_outcome(RelayScheme.SCHEME2, [1.0, 2.0, 3.0, 4.0, 5.0], 1.0)
    criterion("6", ok, detail)
    assert ok


def test_criterion_7_scheme_comparison(criterion):
    target = 1e-2
    direct = SerCurve("direct", "snr_db", "dB")
    for s in RELAY_GRID:
        direct.add(s, simulate_direct(SETUP, s, N_SYMBOLS, SEED))
    s1 = scheme_curve(RelayScheme.SCHEME1, SETUP.at(3.0), RELAY_GRID, N_SYMBOLS, SEED)
    s2 = scheme_curve(RelayScheme.SCHEME2, SETUP.at(1.0), RELAY_GRID, N_SYMBOLS, SEED, 4 * N_SYMBOLS)
    req = {name: c.required_snr(target) for name, c in (("direct", direct), ("scheme1", s1), ("scheme2", s2))}
    finite = all(math.isfinite(v) for v in req.values())
    ordering = finite and req["scheme2"] < req["scheme1"] < req["direct"]
    g1 = req["direct"] - req["scheme1"] if finite else math.nan
    g2 = req["direct"] - req["scheme2"] if finite else math.nan
    gains_ok = finite and abs(g1 - 10) <= 5 and abs(g2 - 15) <= 5
    ok = ordering and gains_ok
    floors = ", ".join(f"{c.name} min SER={min(c.sers()):.4f}" for c in (direct, s1, s2))
    reqs = ", ".join(f"{k}={v:.1f}dB" for k, v in req.items())
    criterion("7", ok, f"required SNR at SER 1e-2: {reqs}; gains {g1:.1f}/{g2:.1f} dB; {floors}")
    assert ok


def exhaustive_ser(N, p, taus):
    bounds = [-np.inf] + list(taus) + [np.inf]
    err = 0.0
    for s in range(4):
        k = np.arange(s * N + 1)
        pmf = stats.binom.pmf(k, s * N, p)
        inside = (k >= bounds[s]) & (k < bounds[s + 1])
        err += 1 - pmf[inside].sum()
    return err / 4


def test_criterion_8_oracle_equivalence(criterion):
    parts, ok = [], True
    for d in (1, 3, 6):
        spec = ChannelSpec(ENV1, float(d))
        cfg = LinkConfig(spec, QcskScheme(150), n_symbols=N_SYMBOLS, rng_seed=SEED, isi_length=1)
        taus = calibrate_thresholds(cfg).as_tuple()
        est = simulate_link(cfg.with_(thresholds=Thresholds(*taus)))
        ref = exhaustive_ser(150, cfg.hop().p1, taus)
        se = math.sqrt(ref * (1 - ref) / est.trials)
        good = abs(est.ser - ref) <= 3 * se
        ok &= good
        parts.append(f"{d}um sim={est.ser:.5f} exact={ref:.5f} ({abs(est.ser - ref) / se if se else 0:.2f} SE)")
    criterion("8", ok, "; ".join(parts))
    assert ok


SMALL = """\
simulation.n_symbols = 12000
calibration.symbols = 8000
calibration.distances = [2.0, 5.0]
concentration.candidates = [100, 150]
concentration.snr_min = 0.0
concentration.snr_max = 10.0
concentration.snr_step = 10.0
relay.snr_min = 0.0
relay.snr_max = 10.0
relay.snr_step = 10.0
relay.scheme1_locations = [2.0, 3.0]
relay.scheme2_locations = [2.0, 3.0]
relay.training_symbols = 24000
"""

COMMANDS = [
    ("calibrate-thresholds", [], "thresholds.csv"),
    ("sweep-concentration", [], "concentration.csv"),
    ("simulate-link", ["--snr", "5"], "link.csv"),
    ("relay-sweep", ["--scheme", "1"], "relay_scheme1.csv"),
    ("relay-sweep", ["--scheme", "2"], "relay_scheme2.csv"),
    ("relay-sweep", ["--scheme", "af"], "relay_schemeaf.csv"),
    ("compare-schemes", [], "compare.csv"),
]


def test_criterion_9_determinism(criterion, tmp_path):
    cfg = tmp_path / "small.toml"
    cfg.write_text(SMALL)
    mismatched = []
    for cmd, extra, name in COMMANDS:
        outputs = []
        for run, workers in (("a", "1"), ("b", "1"), ("c", "3")):
            out = tmp_path / f"{cmd}{''.join(extra)}-{run}"
            assert main([cmd, "--config", str(cfg), "--out", str(out), "--workers", workers] + extra) == 0
            outputs.append((out / name).read_bytes())
        if len(set(outputs)) != 1:
            mismatched.append(name)
    svgs = []
    for run in "ab":
        out = tmp_path / f"plot-{run}"
        assert main(["plot", str(tmp_path / "simulate-link--snr5-a" / "link.csv"), "--out", str(out)]) == 0
        svgs.append(b"".join(p.read_bytes() for p in sorted(out.glob("*.svg"))))
    if svgs[0] != svgs[1]:
        mismatched.append("plot svg")
    ok = not mismatched
    criterion("9", ok, f"{len(COMMANDS)} subcommands x 3 runs (workers 1,1,3) + plot; mismatches: {mismatched or 'none'}")
    assert ok
