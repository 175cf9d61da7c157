import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from stokes_ctm.cli import main, run
from stokes_ctm.config import ExperimentConfig, load_config, write_config
from stokes_ctm.errors import ConfigError
from stokes_ctm.experiments import COST_COLUMNS, CostCurve, read_csv, write_csv
from stokes_ctm.fitting import fit_cost_models
from stokes_ctm.snapshot import MAGIC, read_snapshot, write_snapshot

FAST = dict(M=60, M_f=20, T_list=(0.3, 0.4, 0.5, 0.8), samples=3, T_obs=(1.0, 2.0))


def fast_cfg(tmp_path, **kw):
    return ExperimentConfig().with_overrides(out=str(tmp_path), **(FAST | kw))


# -- config ------------------------------------------------------------------------
def test_default_config_valid():
    cfg = ExperimentConfig().validate()
    assert cfg.T_list == (0.2, 0.3, 0.4, 0.5, 0.7, 1.0)
    assert cfg.to_dict()["T_list"] == list(cfg.T_list)


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig().with_overrides(seed=7, T_list=(0.25, 0.5, 0.75, 1.0), L=2.0)
    path = write_config(cfg, tmp_path / "c.ini")
    assert load_config(path) == cfg


@pytest.mark.parametrize("text", [
    "[bogus]\nx = 1\n",
    "[domain]\nnx = 32\nM = 5\n",
    "[domain]\nnx = thirty\n",
    "[horizons]\nT_list = 0.5 3.0\n",
    "[domain]\ncollar_width = 0.7\n",
    "[kernel]\nn_s = 1000\n",
])
def test_bad_config_rejected(tmp_path, text):
    p = tmp_path / "bad.ini"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


# -- snapshot ----------------------------------------------------------------------
@settings(max_examples=40, deadline=None)
@given(a=arrays(np.float64, array_shapes(min_dims=0, max_dims=3, max_side=6),
                elements=st.floats(allow_nan=False, width=64)))
def test_snapshot_round_trip(tmp_path_factory, a):
    p = tmp_path_factory.mktemp("snap") / "a.snap"
    write_snapshot(p, a)
    b = read_snapshot(p)
    assert b.shape == a.shape
    assert b.tobytes() == np.asarray(a, order="C").tobytes()


def test_snapshot_layout(tmp_path):
    p = write_snapshot(tmp_path / "x.snap", np.arange(6.0).reshape(2, 3))
    raw = p.read_bytes()
    assert raw[:8] == MAGIC and len(raw) == 16 + 16 + 48
    assert np.frombuffer(raw[16:32], "<i8").tolist() == [2, 3]


@pytest.mark.parametrize("mangle", ["magic", "version", "truncate"])
def test_snapshot_rejects_corruption(tmp_path, mangle):
    p = write_snapshot(tmp_path / "x.snap", np.ones((3, 3)))
    raw = bytearray(p.read_bytes())
    if mangle == "magic":
        raw[0:1] = b"X"
    elif mangle == "version":
        raw[8] = 9
    else:
        raw = raw[:-8]
    p.write_bytes(bytes(raw))
    with pytest.raises(ValueError):
        read_snapshot(p)


# -- csv and fits -------------------------------------------------------------------
@settings(max_examples=40, deadline=None)
@given(x=st.floats(allow_nan=False, allow_infinity=False))
def test_csv_float_round_trip(tmp_path_factory, x):
    p = tmp_path_factory.mktemp("csv") / "r.csv"
    write_csv(p, [dict(T=x, method="m", cost=x, terminal=0.0, iterations=1)], COST_COLUMNS)
    row = read_csv(p)[0]
    assert row["T"] == x and row["method"] == "m"


def test_synthetic_inv_T_fit():
    T = np.array([0.2, 0.3, 0.5, 0.7, 1.0])
    rep = fit_cost_models(T, np.exp(2 + 3 / T))
    assert rep.inv_T.intercept == pytest.approx(2) and rep.inv_T.slope == pytest.approx(3)
    assert rep.inv_T.r2 == pytest.approx(1.0) and rep.preferred == "1/T"


def test_synthetic_inv_T4_fit():
    T = np.array([0.2, 0.3, 0.5, 0.7, 1.0])
    assert fit_cost_models(T, np.exp(1 + 0.05 / T**4)).preferred == "1/T^4"


def test_fit_rejects_bad_rows():
    with pytest.raises(ValueError):
        fit_cost_models([0.2, 0.3, 0.5], [1, 2, 3])
    with pytest.raises(ValueError):
        fit_cost_models([0.2, 0.3, 0.5, 1.0], [1, 0, 3, 4])


def test_cost_curve_rejects_negative(tmp_path):
    p = write_csv(tmp_path / "c.csv", [dict(T=0.5, method="m", cost=-1.0, terminal=0, iterations=0)],
                  COST_COLUMNS)
    with pytest.raises(ValueError):
        CostCurve.from_csv(p)


# -- runs ------------------------------------------------------------------------------
def test_cost_sweep_rows_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("cost-sweep", fast_cfg(a)) == 0
    assert run("cost-sweep", fast_cfg(b, threads=3)) == 0
    rows = read_csv(a / "cost_sweep.csv")
    assert len(rows) == 4 * 3
    assert {r["method"] for r in rows} == {"direct-stokes", "transmuted", "direct-heat-1d"}
    assert (a / "cost_sweep.csv").read_bytes() == (b / "cost_sweep.csv").read_bytes()
    man = json.loads((a / "manifest.json").read_text())
    assert man["seed"] == 0 and man["config"]["T_list"] == [0.3, 0.4, 0.5, 0.8]
    assert "cost_sweep.csv" in man["outputs"] and len(man["wall_time"]) == 12


def test_report_prints_fits(tmp_path, capsys):
    assert run("cost-sweep", fast_cfg(tmp_path), methods=("transmuted",)) == 0
    capsys.readouterr()
    code = main(["report", "--out", str(tmp_path), "--input", str(tmp_path / "cost_sweep.csv"),
                 "--modes", "20", "--T", "0.3", "0.5"])
    out = capsys.readouterr().out
    assert code == 0
    assert "1/T " in out and "1/T^4" in out and "preferred model" in out


@pytest.mark.parametrize("cmd,files", [
    ("modes", ["modes.csv", "modes_fields.snap"]),
    ("wave-control", ["wave_control.csv"]),
    ("direct-control", ["direct_control.csv"]),
    ("build-kernel", ["kernels.csv", "kernel_T0.3.snap"]),
    ("transmute", ["transmute.csv"]),
    ("observability", ["observability.csv", "boundary_check.csv"]),
])
def test_subcommands_write_outputs(tmp_path, cmd, files):
    assert run(cmd, fast_cfg(tmp_path)) == 0
    for f in files:
        assert (tmp_path / f).is_file()
    assert (tmp_path / "manifest.json").is_file()


def test_modes_snapshot_matches_csv(tmp_path):
    run("modes", fast_cfg(tmp_path))
    E = read_snapshot(tmp_path / "modes_fields.snap")
    assert E.shape[1] == 60 == len(read_csv(tmp_path / "modes.csv"))


def test_exit_code_config_error(tmp_path, capsys):
    code = main(["cost-sweep", "--out", str(tmp_path), "--T", "5.0"])
    assert code == 2
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["status"] == 2 and rec["error"] == "ConfigError"
    assert json.loads((tmp_path / "error.json").read_text())["status"] == 2


def test_exit_code_missing_report_input(tmp_path):
    assert main(["report", "--out", str(tmp_path), "--input", str(tmp_path / "none.csv")]) == 2


def test_exit_code_numerical_failure(tmp_path, capsys):
    ini = tmp_path / "c.ini"
    ini.write_text("[modes]\nM = 60\nM_f = 40\n[horizons]\nT_wave = 0.001\n[run]\nsamples = 1\n")
    code = main(["wave-control", "--config", str(ini), "--out", str(tmp_path)])
    assert code == 3
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["error"] == "ControlTimeError"


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "stokes_ctm.cli", "cost-sweep", "--out", str(tmp_path),
                          "--T", "9"], capture_output=True, text=True)
    assert res.returncode == 2
