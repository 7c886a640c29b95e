import csv
import json
import subprocess
import sys

import pytest

from mcrelay.cli import main
from mcrelay.config import ConfigError, ExperimentConfig, dump_config, from_dict, load_config


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- config ------------------------------------------------------------------------

def test_default_config_is_valid():
    cfg = load_config(None)
    assert cfg.channel.dimension == 1
    assert cfg.modulation.concentration == 150


def test_dump_and_reload_round_trip(tmp_path):
    cfg = from_dict({"seed": 5, "channel": {"distance": 4.0}, "relay": {"scheme1_locations": [1.0, 2.0]}})
    path = tmp_path / "c.toml"
    path.write_text(dump_config(cfg))
    again = load_config(path)
    assert again.to_dict() == cfg.to_dict()
    assert again.digest() == cfg.digest()


def test_nested_tables_are_accepted(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[timing]\nsymbol_duration = 0.2\nsampling_duration = 0.1\n")
    cfg = load_config(path)
    assert cfg.timing.symbol_duration == 0.2


@pytest.mark.parametrize("section,key,value", [
    ("channel", "nope", 1),
    ("timing", "sampling_duration", 0.3),
    ("channel", "distance", -1.0),
    ("modulation", "concentration", "many"),
    ("simulation", "n_symbols", 0),
])
def test_invalid_config_rejected(section, key, value):
    with pytest.raises(ConfigError) as err:
        from_dict({section: {key: value}})
    assert err.value.field.endswith(key)


def test_default_relay_config_validates():
    ExperimentConfig().validate_relay()


# -- CLI --------------------------------------------------------------------------

def test_unknown_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('channel.unknown = 3\n')
    assert main(["simulate-link", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "channel.unknown" in capsys.readouterr().err


def test_bad_toml_exits_2(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("= = =\n")
    assert main(["calibrate-thresholds", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_missing_config_file_exits_2(tmp_path):
    assert main(["simulate-link", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path)]) == 2


def test_calibrate_thresholds_writes_six_rows(tmp_path):
    assert main(["calibrate-thresholds", "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "thresholds.csv")
    assert [float(r["distance_um"]) for r in rows] == [1, 2, 3, 4, 5, 6]
    for r in rows:
        assert float(r["tau1"]) < float(r["tau2"]) < float(r["tau3"])
    manifest = json.loads((tmp_path / "thresholds.manifest.json").read_text())
    assert manifest["command"] == "calibrate-thresholds"
    assert (tmp_path / "thresholds.config.toml").exists()


LINK_ARGS = ["simulate-link", "--distance", "3", "--snr", "5", "--symbols", "20000"]


def test_simulate_link_is_byte_reproducible(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(LINK_ARGS + ["--out", str(a)]) == 0
    assert main(LINK_ARGS + ["--out", str(b)]) == 0
    assert main(LINK_ARGS + ["--out", str(c), "--workers", "3"]) == 0
    first = (a / "link.csv").read_bytes()
    assert first == (b / "link.csv").read_bytes()
    assert first == (c / "link.csv").read_bytes()
    ma = json.loads((a / "link.manifest.json").read_text())
    mb = json.loads((b / "link.manifest.json").read_text())
    assert ma["results"] == mb["results"]
    assert ma["config_digest"] == mb["config_digest"]


def test_manifest_reproduces_run(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(LINK_ARGS + ["--seed", "99", "--out", str(a)]) == 0
    assert main(["simulate-link", "--config", str(a / "link.manifest.json"), "--out", str(b)]) == 0
    assert (a / "link.csv").read_bytes() == (b / "link.csv").read_bytes()
    assert main(["simulate-link", "--config", str(a / "link.config.toml"), "--out", str(b)]) == 0
    assert (a / "link.csv").read_bytes() == (b / "link.csv").read_bytes()


def test_link_csv_schema(tmp_path):
    assert main(LINK_ARGS + ["--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "link.csv")
    assert list(rows[0]) == ["curve", "parameter", "unit", "x", "ser", "errors", "trials", "ci_low", "ci_high"]
    r = rows[0]
    assert int(r["trials"]) == 20000
    assert float(r["ci_low"]) <= float(r["ser"]) <= float(r["ci_high"])


def test_plot_missing_csv_fails(tmp_path):
    assert main(["plot", str(tmp_path / "missing.csv")]) != 0


def test_plot_writes_svg(tmp_path):
    assert main(LINK_ARGS + ["--out", str(tmp_path)]) == 0
    assert main(["plot", str(tmp_path / "link.csv")]) == 0
    svgs = list(tmp_path.glob("*.svg"))
    assert svgs
    assert svgs[0].read_text().lstrip().startswith("<?xml")


def test_relay_sweep_scheme1_reports_optimum(tmp_path):
    args = ["relay-sweep", "--scheme", "1", "--symbols", "20000", "--snr-min", "0", "--snr-max", "10",
            "--out", str(tmp_path)]
    assert main(args) == 0
    manifest = json.loads((tmp_path / "relay_scheme1.manifest.json").read_text())
    assert manifest["results"]["optimal_location"] == 3.0
    assert set(manifest["results"]["optimal_location_per_snr"].values()) == {3.0}


def test_relay_location_beyond_receiver_exits_2(tmp_path):
    assert main(["relay-sweep", "--scheme", "1", "--locations", "7", "--out", str(tmp_path)]) == 2


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "mcrelay", "--version"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "0.1.0" in out.stdout
