import json

import numpy as np
import pytest

from kuramoto_kinetic import io
from kuramoto_kinetic.config import DEFAULTS, default_config, load_config
from kuramoto_kinetic.errors import ConfigError
from kuramoto_kinetic.kinetic import simulate_kinetic, vonmises_bump
from kuramoto_kinetic.model import FrequencyGrid, ModelParams
from kuramoto_kinetic.reports import InequalityReport, combine


# ---------------------------------------------------------------- config

def test_defaults_expose_constants():
    a = default_config().analysis
    assert a["alpha"] == pytest.approx(np.pi / 6)
    assert a["beta"] == pytest.approx(np.pi / 3)
    assert a["delta0"] == 0.5
    assert a["Q"] == pytest.approx(1 / 3600)
    assert a["lambda"] is None and a["eps"] is None


def test_yaml_round_trip():
    cfg = load_config(text="model:\n  K: 5.0\n  W: 0.05\ngrid:\n  n_theta: 128\n")
    again = load_config(text=cfg.to_yaml())
    assert again == cfg
    assert again.hash == cfg.hash
    assert cfg.grid["n_theta"] == 128 and cfg.grid["n_omega"] == DEFAULTS["grid"]["n_omega"]


def test_hash_changes_with_content():
    assert load_config(text="model:\n  K: 5.0\n").hash != default_config().hash


@pytest.mark.parametrize("text,field,line", [
    ("model:\n  K: 10.0\n  W: -1\n", "model.W", 3),
    ("grid:\n  n_theta: 12.5\n", "grid.n_theta", 2),
    ("grid:\n  bogus: 1\n", "grid.bogus", 2),
    ("nosuch:\n  a: 1\n", "nosuch", 1),
    ("initial:\n  family: triangle\n", "initial.family", 2),
    ("model:\n  K: 1.0\n  W: 2.0\n", "model.W", 3),
    ("analysis:\n  transient: maybe\n", "analysis.transient", 2),
])
def test_config_errors_name_field_and_line(text, field, line):
    with pytest.raises(ConfigError) as ei:
        load_config(text=text)
    assert ei.value.field == field
    assert ei.value.line == line
    assert field in str(ei.value)


def test_invalid_yaml_reports_line():
    with pytest.raises(ConfigError) as ei:
        load_config(text="model:\n  K: [1,\n")
    assert ei.value.line is not None


def test_two_bump_needs_all_keys():
    with pytest.raises(ConfigError):
        load_config(text="initial:\n  family: two_bump\n  centers: [0, 3]\n")


# ---------------------------------------------------------------- snapshots

def test_snapshot_round_trip(tmp_path):
    grid = FrequencyGrid.from_density(0.1, 5)
    s = vonmises_bump(grid, 32, 1.0, 2.0, t=0.25)
    p = ModelParams(10.0, 0.1)
    path = tmp_path / "s.bin"
    io.write_snapshot(path, s, p)
    s2, p2 = io.read_snapshot(path)
    assert np.array_equal(s2.h, s.h) and s2.t == 0.25
    assert np.array_equal(s2.grid.nodes, grid.nodes) and s2.grid.dw == grid.dw
    assert p2 == p
    raw = path.read_bytes()
    assert raw[:8] == io.MAGIC
    assert len(raw) == io._HEADER.size + 8 + 8 * (5 + 5 + 5 * 32)


def test_snapshot_rejects_bad_magic(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"\x00" * 100)
    with pytest.raises(ValueError):
        io.read_snapshot(path)


def test_trajectory_round_trip(tmp_path):
    grid = FrequencyGrid.from_density(0.1, 3)
    p = ModelParams(10.0, 0.1)
    tr = simulate_kinetic(vonmises_bump(grid, 32), p, 1e-2, 0.1, stride=2)
    io.write_trajectory(tmp_path, tr)
    back = io.read_trajectory(tmp_path)
    assert len(back.snapshots) == len(tr.snapshots)
    assert np.array_equal(back.R_steps, tr.R_steps) and back.stride == 2
    assert all(np.array_equal(a.h, b.h) for a, b in zip(back.snapshots, tr.snapshots))


def test_trajectory_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        io.read_trajectory(tmp_path)


# ---------------------------------------------------------------- csv and json

def test_csv_seventeen_digits_and_hash(tmp_path):
    path = tmp_path / "a.csv"
    x = 0.1 + 0.2
    io.write_csv(path, ["x", "flag", "n"], [(x, True, 3)], "abc123")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config_hash=abc123 ")
    assert lines[1] == "x,flag,n"
    assert lines[2] == "0.30000000000000004,1,3"
    h, cols, arr = io.read_csv(path)
    assert h == "abc123" and cols == ["x", "flag", "n"]
    assert arr[0, 0] == x


def test_csv_empty_table(tmp_path):
    path = tmp_path / "e.csv"
    io.write_csv(path, ["a", "b"], [], "h")
    _, cols, arr = io.read_csv(path)
    assert cols == ["a", "b"] and arr.shape == (0, 2)


def test_json_nonfinite_to_null(tmp_path):
    path = tmp_path / "r.json"
    io.write_json(path, {"a": np.float64(np.inf), "b": np.arange(3), "c": np.bool_(True)}, "h")
    d = json.loads(path.read_text())
    assert d["a"] is None and d["b"] == [0, 1, 2] and d["c"] is True and d["config_hash"] == "h"


# ---------------------------------------------------------------- reports

def test_report_pass_rule():
    r = InequalityReport("x", [0, 1], [0.1, -0.05], 0.05)
    assert r.passed and r.min_margin == -0.05
    r.tol = 0.0
    assert not r.passed
    assert InequalityReport("e", [], [], 0.0).min_margin == float("inf")
    s = InequalityReport.skip("s", "why")
    assert s.passed and s.skipped and s.summary()["reason"] == "why"


def test_combine_normalizes():
    a = InequalityReport("a", [0], [-1.0], 2.0)
    b = InequalityReport("b", [0], [3.0], 1.0)
    c = combine("ab", [a, b])
    assert c.passed and c.min_margin == -0.5
