import io
import math
import os
import tempfile
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wtqkd.channel import LinkExtras
from wtqkd.errors import ConfigError, NoLockError
from wtqkd.harness import (
    SweepRow, SweepTable, config_from_mapping, default_config, emit_csv, evaluate_link, itu_channel_nm,
    load_config, load_csv, optimize_injection, run_attenuation_sweep,
)
from wtqkd.harness.bridge import LaserPoint, point_seed
from wtqkd.harness.cli import main
from wtqkd.keyrate import DetectionTally

QUICK = """
seed = 3
calibration_pulses = 16
[grids]
injection_uw = [10.0, 160.0]
wavelength_nm = [1550.12, 1560.2]
attenuation_db = [0.0, 11.5, 30.0]
"""


@pytest.fixture(scope="module")
def config():
    return default_config()


def test_default_config_loads(config):
    assert config.protocol.signal_intensity == 0.4
    assert config.receiver.detector_efficiency == 0.33
    assert config.injection.wavelength_nm == 1550.12
    assert config.drive.dc_bias_ma == 14.8
    assert 11.5 in config.attenuation_grid_db and 26.5 in config.attenuation_grid_db
    assert len(config.attenuation_grid_db) == 20
    assert config.injection_span_decades >= 1.0
    assert load_config() == config


def test_wavelength_grid_is_itu(config):
    assert 1550.12 in config.wavelength_grid_nm
    for wl in config.wavelength_grid_nm:
        assert itu_channel_nm(wl) == pytest.approx(wl, abs=0.006)
    assert itu_channel_nm(1550.0) == pytest.approx(1550.12, abs=0.005)


@pytest.mark.parametrize("data,key", [
    ({"protocol": {"decoy_intensity": 0.5}}, "protocol.decoy_intensity"),
    ({"protocol": {"colour": 1}}, "protocol.colour"),
    ({"grids": {"injection_uw": [80.0, 10.0]}}, "grids.injection_uw"),
    ({"grids": {"attenuation_db": []}}, "grids.attenuation_db"),
    ({"fidelity": "monte_carlo", "monte_carlo_symbols": 100}, "monte_carlo_symbols"),
    ({"bogus": 1}, "bogus"),
    ({"sweep": {"optimize_metric": "speed"}}, "sweep.optimize_metric"),
    ({"laser": {"mode_count": 4}}, "laser.mode_count"),
])
def test_schema_errors_name_the_key(config, data, key):
    with pytest.raises(ConfigError) as exc:
        config_from_mapping(data, base=config)
    assert exc.value.key == key


def test_config_file_overrides(tmp_path, config):
    path = tmp_path / "c.toml"
    path.write_text(QUICK)
    c = load_config(path)
    assert c.seed == 3 and c.injection_grid_uw == (10.0, 160.0)
    assert c.protocol == config.protocol
    path.write_text("seed = [")
    with pytest.raises(ConfigError):
        load_config(path)


def test_point_seed_depends_on_wavelength_only():
    assert point_seed(1, 1550.12) == point_seed(1, 1550.12)
    assert point_seed(1, 1550.12) != point_seed(1, 1560.2)
    assert point_seed(1, 1550.12) != point_seed(2, 1550.12)


# CSV ------------------------------------------------------------------------

row_values = st.floats(0.0, 1.0, allow_nan=False)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(0, 1e3), st.floats(0, 400), st.floats(0, 60), row_values, row_values, row_values,
                          row_values, st.floats(0, 1e9), st.booleans()), min_size=1, max_size=6,
                unique_by=lambda r: r[0]))
def test_csv_round_trip(rows):
    table = SweepTable("attenuation_db", tuple(SweepRow(*r) for r in rows))
    buf = io.StringIO()
    emit_csv(table, buf)
    path_text = buf.getvalue()
    assert path_text.splitlines()[0].startswith("attenuation_db,injection_power_uw,er_db,visibility,e_z,e_x,Q_mu")
    fd, path = tempfile.mkstemp(suffix=".csv")
    os.close(fd)
    try:
        with open(path, "w") as fh:
            fh.write(path_text)
        back = load_csv(path)
    finally:
        os.remove(path)
    assert back.variable == table.variable
    for a, b in zip(back.rows, table.rows):
        for x, y in zip(a.__dict__.values(), b.__dict__.values()):
            assert x == pytest.approx(y, rel=1e-12)


def test_sweep_row_validation():
    with pytest.raises(ValueError):
        SweepRow(0, 0, 20, 1.2, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        SweepRow(0, 0, 20, 1.0, 0, 0, 0, -1.0)
    nan = math.nan
    SweepRow(1550, nan, nan, nan, nan, nan, nan, 0.0, False)


# link evaluation and optimisation -------------------------------------------

def test_attenuation_sweep_decreasing(config):
    table = run_attenuation_sweep(config)
    skr = table.column("skr_bits_per_s")
    assert len(table) == 20
    assert np.all(np.diff(skr) < 0)
    assert skr[-1] > 0


def test_monte_carlo_fidelity_is_seeded(config):
    c = replace(config, fidelity="monte_carlo", monte_carlo_symbols=20_000)
    link = LinkExtras(er_db=27.0, visibility=0.98)
    a = evaluate_link(c, 5.0, link)
    b = evaluate_link(c, 5.0, link)
    assert np.array_equal(a.gain, b.gain)
    assert not np.array_equal(a.gain, evaluate_link(c, 5.0, link, seed=99).gain)


def test_single_point_grid_returns_that_point(config):
    c = replace(config, injection_grid_uw=(42.0,))
    assert optimize_injection(c, 1550.12) == 42.0


def test_narrow_grid_rejected(config):
    c = replace(config, injection_grid_uw=(40.0, 80.0))
    with pytest.raises(ConfigError):
        optimize_injection(c, 1550.12)


def test_no_lock_raises(config):
    c = replace(config, injection_grid_uw=(0.0, 10.0, 160.0), lock_smsr_db=200.0, calibration_pulses=16)
    with pytest.raises(NoLockError):
        optimize_injection(c, 1550.12)


def test_laser_point_lock_rule():
    p = LaserPoint(0.0, 1550.12, 30.0, False, 0.01, 0.01, 60.0, 70.0, 35.0, 1.0)
    assert not p.locked(20.0)
    q = replace(p, injection_uw=80.0)
    assert q.locked(20.0) and not q.locked(61.0)
    assert q.link() == LinkExtras(er_db=30.0, visibility=0.01)


# CLI ------------------------------------------------------------------------

@pytest.mark.parametrize("command", ["sweep-attenuation", "sweep-injection", "sweep-wavelength"])
def test_cli_sweeps_are_byte_identical(tmp_path, command):
    cfg = tmp_path / "c.toml"
    cfg.write_text(QUICK)
    outs = []
    for k in range(2):
        out = tmp_path / f"{command}-{k}.csv"
        assert main([command, "--config", str(cfg), "--seed", "5", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert len(outs[0].splitlines()) > 1


def test_cli_monte_carlo_attenuation_is_byte_identical(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(QUICK)
    args = ["sweep-attenuation", "--config", str(cfg), "--fidelity", "mc"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_cli_skr_from_tally(tmp_path, capsys):
    sent = np.array([[750_000, 50_000], [125_000, 8_000], [125_000, 8_000]])
    det = np.array([[5_000, 300], [1_300, 80], [2, 1]])
    err = np.array([[20, 3], [6, 1], [1, 0]])
    path = tmp_path / "tally.csv"
    DetectionTally(sent, det, err).to_csv(path)
    assert main(["skr", str(path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "key,value"
    values = dict(line.split(",") for line in out[1:])
    assert float(values["skr"]) > 0


def test_cli_reports_config_errors(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[protocol]\ndecoy_intensity = 0.9\n")
    assert main(["sweep-attenuation", "--config", str(cfg)]) == 2
    assert "protocol.decoy_intensity" in capsys.readouterr().err


def test_cli_simulate_laser(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    assert main(["simulate-laser", "--pulses", "8", "--power-uw", "80", "--out", str(out)]) == 0
    lines = dict(line.split("=", 1) for line in capsys.readouterr().out.splitlines())
    assert float(lines["injection_uw"]) == 80.0
    assert float(lines["er_db"]) > 0
    assert out.read_text().startswith("time_ps,re_E,im_E")
