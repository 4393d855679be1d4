import json
import math

import numpy as np
import pytest

from macromech import cli, experiments
from macromech.conditioning import Homodyne, SystemParams
from macromech.config import load_config, parse_list, parse_value
from macromech.errors import ConfigError, NoCrossingError
from macromech.experiments import find_crossing, fit_sinusoid

BASE = SystemParams(0.8, 2.0, 1.0, math.pi)


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


SMALL_SWEEP = """
[experiment]
kind = sweep-k
name = small
seed = 4

[system]
alpha = 0.8
beta = 2
tau = pi

[measurement]
type = homodyne
x = 0
theta = 0, pi/2

[sweep]
k = 0.5:1.5:0.5
"""


def test_parse_value():
    assert parse_value("pi/4") == pytest.approx(math.pi / 4)
    assert parse_value("1.24 + 1.24i") == 1.24 + 1.24j
    assert parse_value("i") == 1j
    assert parse_value("2e-3j") == 2e-3j
    assert parse_value("sqrt(2)") == pytest.approx(math.sqrt(2))
    for bad in ("__import__('os')", "1/0", "x", "[1]"):
        with pytest.raises(ValueError):
            parse_value(bad)


def test_parse_list():
    assert parse_list("0, pi/2") == [0.0, pytest.approx(math.pi / 2)]
    assert parse_list("0.1:0.5:0.1") == pytest.approx([0.1, 0.2, 0.3, 0.4, 0.5])
    with pytest.raises(ValueError):
        parse_list("1:0:0.1")
    with pytest.raises(ValueError):
        parse_list("0:1:0")
    with pytest.raises(ValueError):
        parse_list("")


def test_config_errors_are_located(tmp_path):
    with pytest.raises(ConfigError, match="kind"):
        load_config(write(tmp_path, "[experiment]\nkind = nope\n"))
    with pytest.raises(ConfigError, match=r"line\s+2"):
        load_config(write(tmp_path, "[experiment]\n=oops\n"))
    with pytest.raises(ConfigError, match="missing"):
        load_config(write(tmp_path, "[system]\nk = 1\n"))
    cfg = load_config(write(tmp_path, SMALL_SWEEP.replace("k = 0.5:1.5:0.5", "k = 0.5:abc:1")))
    with pytest.raises(ConfigError, match=r"\[sweep\] k"):
        experiments.run_experiment(cfg)


def test_run_writes_outputs(tmp_path):
    cfg = write(tmp_path, SMALL_SWEEP)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "o"), "--debug-invariants"]) == 0
    lines = (tmp_path / "o" / "small.csv").read_text().splitlines()
    assert lines[0] == "k,measurement,x_or_sigma_re,theta_or_sigma_im,I,mean_excitations,gap"
    assert len(lines) == 7
    manifest = json.loads((tmp_path / "o" / "small.manifest.json").read_text())
    assert manifest["seed"] == 4
    assert manifest["config"]["sweep"]["k"] == "0.5:1.5:0.5"
    assert manifest["version"]
    assert manifest["wall_time_s"] >= 0


def test_csv_is_full_precision(tmp_path):
    cfg = write(tmp_path, SMALL_SWEEP)
    cli.main(["run", str(cfg), "--out", str(tmp_path)])
    row = (tmp_path / "small.csv").read_text().splitlines()[1].split(",")
    assert float(row[4]) == float(f"{float(row[4]):.17g}")
    assert len(row[4].replace(".", "").lstrip("0")) >= 15


def test_byte_identical_reruns(tmp_path):
    cfg = write(tmp_path, SMALL_SWEEP)
    cli.main(["run", str(cfg), "--out", str(tmp_path / "a")])
    cli.main(["run", str(cfg), "--out", str(tmp_path / "b"), "--threads", "3"])
    assert (tmp_path / "a" / "small.csv").read_bytes() == (tmp_path / "b" / "small.csv").read_bytes()


def test_exit_code_config(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "missing.ini")]) == 1
    assert "config error" in capsys.readouterr().err


def test_exit_code_invariant(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(experiments, "state_metrics", lambda s: (2.0, 1.0))
    cfg = write(tmp_path, SMALL_SWEEP)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path), "--debug-invariants"]) == 2
    assert "I <= <b^dag b>" in capsys.readouterr().err


def test_exit_code_numerical(tmp_path, capsys):
    text = """
[experiment]
kind = sweep-x-theta
[system]
k = 0
[sweep]
x = 0:2:0.5
[analysis]
find_crossing = true
"""
    assert cli.main(["run", str(write(tmp_path, text)), "--out", str(tmp_path)]) == 3
    assert "flat" in capsys.readouterr().err


def test_find_crossing_reference_value():
    x = find_crossing(BASE, 0.0, np.arange(1.0, 2.0, 0.02))
    assert x == pytest.approx(1.42701, abs=0.01)


def test_find_crossing_uncoupled():
    with pytest.raises(NoCrossingError):
        find_crossing(SystemParams(0.8, 2.0, 0.0, math.pi), 0.0, np.arange(0, 2, 0.1))


def test_fit_sinusoid_recovers_parameters():
    th = np.linspace(0, 2 * np.pi, 40, endpoint=False)
    fit = fit_sinusoid(th, 1.5 + 0.4 * np.sin(th + 1.1))
    assert fit["a"] == pytest.approx(1.5)
    assert fit["c"] == pytest.approx(0.4)
    assert fit["b"] == pytest.approx(1.1)
    fit = fit_sinusoid(th, 1.5 - 0.4 * np.sin(th + 1.1))
    assert fit["c"] > 0
    assert fit["b"] == pytest.approx(1.1 + np.pi)


def test_sweep_sigma_ordering(tmp_path):
    text = """
[experiment]
kind = sweep-sigma
name = het
[system]
tau = pi
[measurement]
type = heterodyne
sigma = 0.25, i, 1.24 + 1.24i
[sweep]
k = 1, 2
"""
    assert cli.main(["run", str(write(tmp_path, text)), "--out", str(tmp_path), "--debug-invariants"]) == 0
    rows = [r.split(",") for r in (tmp_path / "het.csv").read_text().splitlines()[1:]]
    at = {(float(r[0]), float(r[2]), float(r[3])): (float(r[4]), float(r[5])) for r in rows}
    for k in (1.0, 2.0):
        i_vals = [at[(k, 0.25, 0.0)][0], at[(k, 0.0, 1.0)][0], at[(k, 1.24, 1.24)][0]]
        assert i_vals[0] < i_vals[1] < i_vals[2]
    i_val, n_val = at[(2.0, 0.0, 1.0)]
    assert n_val - i_val < 1e-2 * n_val


def test_homodyne_theta_independence_at_large_k(tmp_path):
    rows = []
    for t in (0, math.pi / 4, math.pi / 2):
        st = experiments.conditional_state(SystemParams(0.8, 2, 2.0, math.pi), Homodyne(0.0, t))
        rows.append(experiments.state_metrics(st)[0])
    assert np.ptp(rows) < 1e-6 * rows[0]


def test_wigner_grid_shape(tmp_path):
    text = """
[experiment]
kind = wigner-grid
name = w
[measurement]
x = 1.42701
[wigner]
re = -4:4:0.1
im = -2:2:0.1
"""
    assert cli.main(["run", str(write(tmp_path, text)), "--out", str(tmp_path)]) == 0
    data = np.loadtxt(tmp_path / "w.wigner.csv", delimiter=",", skiprows=1)
    W = data[:, 2].reshape(81, 41)
    assert W.max() > 0.5
    assert W.min() < -0.3
    assert np.allclose(W, W[:, ::-1], atol=1e-12)


def test_subtraction_table_path(tmp_path):
    (tmp_path / "t.csv").write_text("delta,var_x,var_p\n0,0.25,0.25\n1,0.3,0.3\n")
    text = "[experiment]\nkind = subtraction\nname = s\n[subtraction]\ntable = t.csv\n"
    assert cli.main(["run", str(write(tmp_path, text)), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "delta,I,mean_excitations"
    assert lines[1] == "0,1,1"
    (tmp_path / "t.csv").write_text("delta,var_x,var_p\n0,0.25\n")
    assert cli.main(["run", str(tmp_path / "c.ini"), "--out", str(tmp_path)]) == 1


def test_shipped_configs_parse():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    names = sorted(p.name for p in root.glob("fig*.ini"))
    assert names == [f"fig{i}.ini" for i in range(1, 10)]
    for p in root.glob("fig*.ini"):
        load_config(p)
