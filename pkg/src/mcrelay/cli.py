"""Command-line entry point.

    mcrelay calibrate-thresholds [--config FILE] [--out DIR]
    mcrelay sweep-concentration  [--concentrations 50,100,150,300] [--distance 3]
    mcrelay simulate-link        [--distance 3] [--snr 10]
    mcrelay relay-sweep --scheme {1,2,af} [--locations 2,3,4]
    mcrelay compare-schemes
    mcrelay plot RESULTS.csv [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 simulation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__, experiments
from .config import ConfigError, ExperimentConfig, dump_config, load_config, parse_snr

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("mcrelay")

OUTPUT_NAMES = {
    "calibrate-thresholds": "thresholds.csv",
    "sweep-concentration": "concentration.csv",
    "simulate-link": "link.csv",
    "compare-schemes": "compare.csv",
}


def _floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> List[int]:
    vals = _floats(text)
    if any(not v.is_integer() for v in vals):
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return [int(v) for v in vals]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat dotted-key TOML file or a run manifest")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--symbols", type=int, help="override simulation.n_symbols")
    common.add_argument("-v", "--verbose", action="store_true")

    snr = argparse.ArgumentParser(add_help=False)
    snr.add_argument("--snr-min", type=float)
    snr.add_argument("--snr-max", type=float)
    snr.add_argument("--snr-step", type=float)

    p = argparse.ArgumentParser(prog="mcrelay", description="Molecular communication relay simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate-thresholds", parents=[common], help="threshold table per distance")
    c.add_argument("--distances", type=_floats)
    c.add_argument("--concentration", type=int)

    c = sub.add_parser("sweep-concentration", parents=[common, snr], help="SER over base concentration")
    c.add_argument("--concentrations", type=_ints)
    c.add_argument("--distance", type=float)

    c = sub.add_parser("simulate-link", parents=[common], help="single-hop SER estimate")
    c.add_argument("--distance", type=float)
    c.add_argument("--snr", help="SNR in dB, or 'inf' for noiseless")
    c.add_argument("--concentration", type=int)

    c = sub.add_parser("relay-sweep", parents=[common, snr], help="SER over relay location")
    c.add_argument("--scheme", choices=["1", "2", "af"], required=True)
    c.add_argument("--locations", type=_floats)
    c.add_argument("--distance", type=float, help="transmitter-receiver distance")

    c = sub.add_parser("compare-schemes", parents=[common, snr], help="direct link vs relay schemes")
    c.add_argument("--distance", type=float, help="transmitter-receiver distance")

    c = sub.add_parser("plot", help="render an emitted CSV as SVG")
    c.add_argument("csv", type=Path)
    c.add_argument("--out", type=Path, help="output directory (default: next to the CSV)")
    return p


def apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.symbols is not None:
        cfg.simulation.n_symbols = args.symbols
    cmd = args.command
    get = lambda name: getattr(args, name, None)
    if cmd == "calibrate-thresholds":
        if get("distances") is not None:
            cfg.calibration.distances = get("distances")
        if get("concentration") is not None:
            cfg.modulation.concentration = get("concentration")
    elif cmd == "sweep-concentration":
        if get("concentrations") is not None:
            cfg.concentration.candidates = get("concentrations")
        if get("distance") is not None:
            cfg.concentration.distance = get("distance")
    elif cmd == "simulate-link":
        if get("distance") is not None:
            cfg.channel.distance = get("distance")
        if get("snr") is not None:
            snr = parse_snr(get("snr"), "--snr")
            cfg.simulation.snr_db = "inf" if snr is None else snr
        if get("concentration") is not None:
            cfg.modulation.concentration = get("concentration")
    elif cmd in ("relay-sweep", "compare-schemes"):
        if get("distance") is not None:
            cfg.channel.distance = get("distance")
        if get("locations") is not None:
            key = {"1": "scheme1_locations", "2": "scheme2_locations", "af": "af_locations"}[args.scheme]
            setattr(cfg.relay, key, get("locations"))
    section = cfg.concentration if cmd == "sweep-concentration" else cfg.relay
    for flag in ("snr_min", "snr_max", "snr_step"):
        if get(flag) is not None:
            setattr(section, flag, get(flag))
    return cfg.validate()


def write_outputs(out_dir: Path, name: str, csv_text: str, cfg: ExperimentConfig,
                  command: str, results: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool": "mcrelay",
        "version": __version__,
        "command": command,
        "seed": cfg.seed,
        "config_digest": cfg.digest(),
        "config": cfg.to_dict(),
        "outputs": [name],
        "results": results,
    }
    stem = Path(name).stem
    # written only after the run finished, so partial files never appear
    (out_dir / name).write_text(csv_text, encoding="utf-8")
    (out_dir / f"{stem}.manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out_dir / f"{stem}.config.toml").write_text(dump_config(cfg), encoding="utf-8")


def _run_plot(args: argparse.Namespace) -> int:
    from .plotting import plot_csv

    if not args.csv.is_file():
        print(f"error: no such CSV: {args.csv}", file=sys.stderr)
        return EXIT_RUNTIME
    out = args.out or args.csv.parent
    out.mkdir(parents=True, exist_ok=True)
    try:
        for path in plot_csv(args.csv, out):
            print(path)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "plot":
        return _run_plot(args)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = apply_overrides(load_config(args.config), args)
        if args.command == "relay-sweep":
            name = f"relay_scheme{args.scheme}.csv"
            csv_text, results = experiments.run_relay_sweep(cfg, args.scheme)
        else:
            name = OUTPUT_NAMES[args.command]
            runner = getattr(experiments, "run_" + args.command.replace("-", "_"))
            csv_text, results = runner(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    write_outputs(args.out, name, csv_text, cfg, args.command, results)
    print(args.out / name)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
