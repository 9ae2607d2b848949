import filecmp
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from kuramoto_kinetic import io
from kuramoto_kinetic.cli import main

SMALL = """\
grid:
  n_theta: 64
  n_omega: 5
  dt: 0.004
  T_end: 1.0
  stride: 5
"""

CONC = SMALL + """\
particles:
  N: 50
  dt: 0.01
concentration:
  Ns: [20, 40]
  trials: 3
  n_theta: 32
  n_omega: 3
  probes: 2
  window: 0.2
  horizon: 0.2
  horizon_step: 0.1
  md_trials: 2
"""


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "c.yaml"
    cfg.write_text(SMALL)
    out = d / "run"
    assert main(["simulate-kinetic", "--config", str(cfg), "--out", str(out)]) == 0
    return cfg, out


def output_files(root):
    out = []
    for base, _, files in os.walk(root):
        for f in files:
            if f.endswith((".csv", ".json", ".bin", ".npz")):
                out.append(os.path.relpath(os.path.join(base, f), root))
    return sorted(out)


def test_simulate_writes_outputs(small_run):
    _, out = small_run
    h, cols, arr = io.read_csv(out / "diagnostics.csv")
    assert cols[:3] == ["t", "R", "phi"]
    assert arr.shape[0] == 51
    assert np.all(np.diff(arr[:10, 1]) > 0)
    man = json.loads((out / "manifest.json").read_text())
    assert man["config_hash"] == h
    assert "diagnostics.csv" in man["files"]


def test_verify_passes(small_run, capsys):
    cfg, out = small_run
    code = main(["verify", "--config", str(cfg), "--out", str(out),
                 "--check", "dissipation_bounds,phi_dot,global_l2"])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3 and all(l.startswith("PASS ") for l in lines)
    rep = json.loads((out / "reports.json").read_text())
    assert rep["all_passed"] is True


def test_verify_tolerance_zero_fails(small_run, capsys):
    cfg, out = small_run
    code = main(["verify", "--config", str(cfg), "--out", str(out), "--check", "dissipation_R_relation",
                 "--tol-scale", "0"])
    assert code == 1
    assert capsys.readouterr().out.startswith("FAIL dissipation_R_relation")


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("model:\n  K: 10.0\n  W: -1\n")
    assert main(["equilibrium", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "model.W" in err and "line 3" in err


def test_unknown_check_exit_code(small_run):
    cfg, out = small_run
    assert main(["verify", "--config", str(cfg), "--out", str(out), "--check", "nonsense"]) == 2


def test_missing_trajectory(tmp_path):
    assert main(["verify", "--out", str(tmp_path / "nothing")]) == 2


def test_reruns_byte_identical(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(CONC)
    for name in ("a", "b"):
        assert main(["simulate-kinetic", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
        assert main(["concentration", "--config", str(cfg), "--out", str(tmp_path / name / "conc")]) == 0
        assert main(["simulate-particles", "--config", str(cfg), "--out", str(tmp_path / name / "p")]) == 0
    files = output_files(tmp_path / "a")
    assert "conc/concentration.csv" in files and "conc/mass_diameter.csv" in files
    assert files == output_files(tmp_path / "b")
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", files, shallow=False)
    assert mismatch == [] and errors == []


def test_seed_override_changes_particles(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(CONC)
    main(["simulate-particles", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["simulate-particles", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "7"])
    assert not filecmp.cmp(tmp_path / "a" / "particles_final.csv", tmp_path / "b" / "particles_final.csv",
                           shallow=False)


def test_zero_trials_write_headers_only(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(CONC.replace("trials: 3", "trials: 0").replace("md_trials: 2", "md_trials: 0"))
    assert main(["concentration", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    for name, cols in (("concentration.csv", ["N", "eps", "exceed_freq", "trials"]),
                       ("mass_diameter.csv", ["trial", "s", "t", "mass", "diam", "passM", "passD"])):
        _, c, arr = io.read_csv(tmp_path / "o" / name)
        assert c == cols and arr.shape[0] == 0


def test_subdivide_synthetic_series(tmp_path):
    t = np.linspace(0, 5, 5001)
    R = np.sqrt(np.minimum(0.09 * np.exp(t), 1.0))
    series = tmp_path / "s.csv"
    io.write_csv(series, ["t", "R"], zip(t, R), "synthetic")
    assert main(["subdivide", "--series", str(series), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "subdivision.json").read_text())
    assert rep["k_star"] == 3
    assert np.allclose(rep["r"][1:4], np.log(2) * np.arange(1, 4), atol=1e-9)


def test_subdivide_needs_input(tmp_path):
    assert main(["subdivide", "--out", str(tmp_path)]) == 2


def test_equilibrium_and_distances(small_run, tmp_path):
    cfg, out = small_run
    assert main(["equilibrium", "--config", str(cfg), "--out", str(tmp_path / "eq")]) == 0
    eq = json.loads((tmp_path / "eq" / "equilibrium.json").read_text())
    assert 0.9 < eq["R_inf"] <= 1.0
    snaps = sorted((out / "snapshots").iterdir())
    assert main(["distances", str(snaps[0]), str(snaps[-1]), "--out", str(tmp_path / "d")]) == 0
    d = json.loads((tmp_path / "d" / "distances.json").read_text())
    assert d["scaled_w2"] <= d["fibered_w2"] + 1e-8


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "kuramoto_kinetic", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "0.1.0"
