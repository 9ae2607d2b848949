"""Command-line runner: ``kuramoto-kinetic <subcommand> --config PATH --out DIR``.

The thread count for the numeric libraries can be fixed with the
KURAMOTO_KINETIC_THREADS environment variable.
"""
import os

_threads = os.environ.get("KURAMOTO_KINETIC_THREADS")
if _threads:
    for _v in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_v, _threads)

import argparse  # noqa: E402
import sys  # noqa: E402
import time  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from . import analysis as an  # noqa: E402
from . import io  # noqa: E402
from .concentration import (concentration_curve, corollary_entry_time, limit_arc,  # noqa: E402
                            mass_diameter_experiment, sample_initial)
from .config import load_config  # noqa: E402
from .errors import ConfigError, KuramotoError  # noqa: E402
from .flow import EvolvingSet, sliding_square_norm  # noqa: E402
from .circle import Arc  # noqa: E402
from .kinetic import (near_uniform, simulate_kinetic, two_bump, uniform_state,  # noqa: E402
                      vonmises_bump)
from .model import FrequencyGrid, ModelParams, stable_equilibrium  # noqa: E402
from .particles import integrate_particles  # noqa: E402
from .transport import InstanceTooLarge, fibered_w2, scaled_w2, verify_order  # noqa: E402

ALL_CHECKS = ("dissipation_bounds", "dissipation_R_relation", "phi_dot", "mass_lateral",
              "instability", "global_l2", "convexity_regime", "transport_dissipation",
              "subdivision", "decay", "sliding_norm", "L2_barrier")


def params_of(cfg):
    return ModelParams(float(cfg.model["K"]), float(cfg.model["W"]))


def initial_state(cfg, n_theta=None, n_omega=None):
    ini = cfg.initial
    nt = n_theta or cfg.grid["n_theta"]
    grid = FrequencyGrid.from_density(float(cfg.model["W"]), n_omega or cfg.grid["n_omega"])
    fam = ini["family"]
    if fam == "vonmises_bump":
        return vonmises_bump(grid, nt, ini.get("center", 0.0), ini.get("concentration", 2.0))
    if fam == "two_bump":
        return two_bump(grid, nt, ini["centers"], ini["weights"], ini["widths"])
    if fam == "uniform":
        return uniform_state(grid, nt)
    if fam == "near_uniform":
        return near_uniform(grid, nt, ini.get("amplitude", 0.1), ini.get("mode", 1), ini.get("phase", 0.0))
    state, _ = io.read_snapshot(ini["path"])
    return state


class Run:
    """Collects written files for the manifest."""

    def __init__(self, cfg, out):
        self.cfg, self.out = cfg, out
        self.files = []
        self.checks = {}
        self.t_start = time.time()
        os.makedirs(out, exist_ok=True)

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out, name)

    def manifest(self, command):
        # wall-clock time goes to a plain log so that JSON outputs stay byte-identical
        io.write_json(os.path.join(self.out, "manifest.json"),
                      {"command": command, "checks": self.checks,
                       "files": sorted(set(self.files))}, self.cfg.hash)
        with open(os.path.join(self.out, "timing.log"), "a") as fh:
            fh.write(f"{command} wall_clock_s={time.time() - self.t_start:.3f}\n")


# ---------------------------------------------------------------- subcommands

def run_kinetic(cfg, out):
    """Simulate, write snapshots and diagnostics.csv; returns (trajectory, diagnostics)."""
    run = Run(cfg, out)
    p = params_of(cfg)
    s0 = initial_state(cfg)
    traj = simulate_kinetic(s0, p, cfg.grid["dt"], cfg.grid["T_end"], stride=cfg.grid["stride"])
    run.files += io.write_trajectory(out, traj)
    d = an.compute_diagnostics(traj, alpha=cfg.analysis["alpha"], beta=cfg.analysis["beta"],
                               delta0=cfg.analysis["delta0"])
    cols = ["t", "R", "phi", "Rdot", "I", "dIdt_formula", "f2_total", "f2_chi_minus", "W2g_to_eq"]
    rows = zip(d.times, d.R, d.phi, d.Rdot, d.I, d.dIdt_formula, d.f2_total, d.f2_chi_minus, d.W2g_to_eq)
    io.write_csv(run.path("diagnostics.csv"), cols, rows, cfg.hash)
    io.write_json(run.path("config.json"), cfg.to_dict(), cfg.hash)
    run.manifest("simulate-kinetic")
    return traj, d


def _scaled(rep, scale):
    if scale != 1.0 and not rep.skipped:
        rep.tol = rep.tol * scale
    return rep


def run_verify(cfg, traj, out, checks=None, tol_scale=None):
    """Run analysis checks on a stored trajectory. Returns (reports, all_passed)."""
    run = Run(cfg, out)
    a = cfg.analysis
    scale = a["tol_scale"] if tol_scale is None else tol_scale
    checks = list(checks or a["checks"])
    unknown = [c for c in checks if c not in ALL_CHECKS]
    if unknown:
        raise ConfigError(f"unknown checks: {', '.join(unknown)}", field="analysis.checks")
    d = an.compute_diagnostics(traj, alpha=a["alpha"], beta=a["beta"], delta0=a["delta0"])
    reports = []

    def add(rep):
        reports.append(_scaled(rep, scale))

    simple = {"dissipation_bounds": an.check_dissipation_bounds,
              "dissipation_R_relation": an.check_dissipation_R_relation,
              "phi_dot": an.check_phi_dot, "mass_lateral": an.check_mass_lateral,
              "instability": an.check_instability, "global_l2": an.check_global_l2}
    sub = None
    for name in checks:
        try:
            if name in simple:
                add(simple[name](d))
            elif name == "convexity_regime":
                rep, _ = an.check_convexity_regime(d, c_T0=a["c_T0"])
                add(rep)
            elif name == "transport_dissipation":
                add(an.check_transport_dissipation(traj, d, seed=cfg.particles["seed"]))
            elif name in ("subdivision", "L2_barrier"):
                if sub is None:
                    sub = an.subdivision_report(d, a["lambda"], a["Q"], a["C"], a["transient"])
                if name == "subdivision":
                    inv = sub.invariants()
                    t0 = sub.check_t0(a["c_T0"])
                    margin = 0.0 if all(inv.values()) else -1.0
                    rep = an.InequalityReport("subdivision_invariants", [sub.t0], [margin], 0.0,
                                              hypotheses=inv)
                    add(rep)
                    add(t0)
                    io.write_json(run.path("subdivision.json"), sub.summary(), cfg.hash)
                else:
                    eps = a["eps"]
                    add(an.check_L2_barrier(traj, d, sub, eps=eps))
            elif name == "sliding_norm":
                arc = Arc(d.phi[0], np.pi / 4)
                aset = EvolvingSet.product(arc, traj.grid.nodes, 0.0)
                _, rep = sliding_square_norm(traj, aset)
                add(rep)
            elif name == "decay":
                add(decay_report(d, cfg))
        except KuramotoError as e:
            add(an.InequalityReport.skip(name, f"{type(e).__name__}: {e}"))
    summ = [r.summary() for r in reports]
    ok = all(r.passed for r in reports if not r.skipped)
    run.checks = {r.name: ("skipped" if r.skipped else ("pass" if r.passed else "fail")) for r in reports}
    io.write_json(run.path("reports.json"), {"reports": summ, "all_passed": ok,
                                              "tol_scale": scale}, cfg.hash)
    run.manifest("verify")
    return reports, ok


def decay_report(d, cfg):
    """Decay fits of W2g-to-equilibrium and dissipation after the convexity-regime entry."""
    _, T0 = an.check_convexity_regime(d, c_T0=cfg.analysis["c_T0"])
    K = d.K
    rW, r2W, fW = an.fit_decay_rate(d.times, d.W2g_to_eq, T0, d.times[-1])
    rI, r2I, fI = an.fit_decay_rate(d.times, d.I, T0, d.times[-1])
    margins = [rW - K / 40, rI - K / 20, r2W - 0.95, r2I - 0.95, 3 * d.dtheta - fW]
    rep = an.InequalityReport("decay", np.arange(5.0), margins, 0.0)
    rep.extra.update(T0_meas=T0, rate_W2=rW, r2_W2=r2W, floor_W2=fW, rate_I=rI, r2_I=r2I, floor_I=fI)
    return rep


def run_subdivide(cfg, out, traj=None, series=None):
    """Subdivision from a trajectory or from a CSV with columns t,R (R' by differences)."""
    run = Run(cfg, out)
    a = cfg.analysis
    if traj is not None:
        d = an.compute_diagnostics(traj, w2g=False)
        rep = an.subdivision_report(d, a["lambda"], a["Q"], a["C"], a["transient"])
    else:
        _, cols, arr = io.read_csv(series)
        t, R = arr[:, cols.index("t")], arr[:, cols.index("R")]
        rep = an.subdivision_from_series(t, R, an.smooth5(np.gradient(R, t)), params_of(cfg).K,
                                         params_of(cfg).W, 1.0, a["lambda"], a["Q"], a["C"],
                                         a["alpha"], a["transient"])
    io.write_json(run.path("subdivision.json"), rep.summary(), cfg.hash)
    run.manifest("subdivide")
    return rep


def run_equilibrium(cfg, out):
    run = Run(cfg, out)
    p = params_of(cfg)
    grid = FrequencyGrid.from_density(p.W, cfg.grid["n_omega"])
    eq = stable_equilibrium(grid, p)
    io.write_json(run.path("equilibrium.json"),
                  {"R_inf": eq.R_inf, "phi_inf": eq.phi_inf, "nodes": eq.nodes, "weights": eq.weights,
                   "atoms": eq.atoms, "residual": eq.residual, "K": eq.K}, cfg.hash)
    run.manifest("equilibrium")
    return eq


def run_particles(cfg, out, seed=None):
    run = Run(cfg, out)
    p = params_of(cfg)
    f0 = initial_state(cfg)
    seed = cfg.particles["seed"] if seed is None else seed
    batch = sample_initial(f0, cfg.particles["N"], seed)
    tr = integrate_particles(batch.ensemble, p, cfg.particles["T_end"], cfg.particles["dt"])
    io.write_csv(run.path("particles.csv"), ["t", "R", "phi"], zip(tr.times, tr.R, tr.phi), cfg.hash)
    io.write_csv(run.path("particles_final.csv"), ["theta", "omega"],
                 zip(tr.phases[-1], tr.freqs), cfg.hash)
    run.manifest("simulate-particles")
    return tr


def run_concentration(cfg, out, seed=None):
    """concentration.csv and mass_diameter.csv; solver-limit errors are logged per N and skipped."""
    run = Run(cfg, out)
    p = params_of(cfg)
    c = cfg.concentration
    seed = cfg.particles["seed"] if seed is None else seed
    f0c = initial_state(cfg, c["n_theta"], c["n_omega"])
    errors = []
    rows = []
    if c["trials"] > 0:
        for n in c["Ns"]:
            try:
                rep = concentration_curve(f0c, [n], c["trials"], c["eps"], p, seed=seed)
                rows += [(n, e, f, tr) for (_, e, f, tr) in rep.rows()]
            except InstanceTooLarge as e:
                errors.append({"N": n, "error": str(e)})
    io.write_csv(run.path("concentration.csv"), ["N", "eps", "exceed_freq", "trials"], rows, cfg.hash)
    md_rows = []
    md = None
    if c["md_trials"] > 0:
        traj, d = run_kinetic(cfg, os.path.join(out, "kinetic"))
        T0 = corollary_entry_time(d.times, d.W2g_to_eq, p.K)
        L = limit_arc(traj.snapshots[-1])
        pdt = cfg.particles["dt"]
        probes = T0 + np.linspace(0.0, c["window"], c["probes"])
        probes = np.round(probes / pdt) * pdt
        horizon = np.arange(0.0, c["horizon"] + 1e-12, c["horizon_step"])
        md = mass_diameter_experiment(traj.snapshots[0], p, cfg.particles["N"], c["md_trials"], L,
                                      float(probes[0]), probes, horizon, pdt, seed=seed)
        md_rows = list(md.rows())
    io.write_csv(run.path("mass_diameter.csv"), ["trial", "s", "t", "mass", "diam", "passM", "passD"],
                 md_rows, cfg.hash)
    if md is not None:
        run.checks = {"fraction_M": md.fraction_M, "fraction_D": md.fraction_D}
    if errors:
        io.write_json(run.path("concentration_errors.json"), {"errors": errors}, cfg.hash)
    run.manifest("concentration")
    return rows, md_rows


def run_distances(cfg, out, a_path, b_path):
    run = Run(cfg, out)
    a, pa = io.read_snapshot(a_path)
    b, _ = io.read_snapshot(b_path)
    res = {"fibered_w2": fibered_w2(a, b)}
    try:
        res["scaled_w2"] = scaled_w2(a, b, pa).distance
        res["order"] = verify_order(a, b, pa).summary()
    except InstanceTooLarge as e:
        res["scaled_w2"] = None
        res["scaled_w2_error"] = str(e)
    io.write_json(run.path("distances.json"), res, cfg.hash)
    run.manifest("distances")
    return res


# ---------------------------------------------------------------- entry point

def build_parser():
    ap = argparse.ArgumentParser(prog="kuramoto-kinetic", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="YAML experiment configuration")
        p.add_argument("--seed", type=int, metavar="U64", help="master seed override")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--check", metavar="NAME[,NAME...]", help="subset of analysis checks")
        p.add_argument("--tol-scale", type=float, metavar="FLOAT", help="multiply all tolerances")
        return p

    common(sub.add_parser("simulate-kinetic", help="run the kinetic solver"))
    common(sub.add_parser("simulate-particles", help="sample and integrate the particle system"))
    common(sub.add_parser("equilibrium", help="solve the stable phase-locked state"))
    p = common(sub.add_parser("verify", help="evaluate inequality checks on a trajectory"))
    p.add_argument("--trajectory", metavar="DIR", help="trajectory directory (default: --out)")
    p = common(sub.add_parser("subdivide", help="dyadic subdivision of a run"))
    p.add_argument("--trajectory", metavar="DIR")
    p.add_argument("--series", metavar="CSV", help="CSV with columns t,R")
    common(sub.add_parser("concentration", help="Monte Carlo concentration and mass/diameter"))
    p = common(sub.add_parser("distances", help="transport distances between two snapshots"))
    p.add_argument("a", metavar="SNAP_A")
    p.add_argument("b", metavar="SNAP_B")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        overrides = {}
        if args.seed is not None:
            overrides["particles.seed"] = args.seed
        if args.tol_scale is not None:
            overrides["analysis.tol_scale"] = args.tol_scale
        cfg = load_config(args.config, overrides=overrides) if args.config else \
            load_config(text="", overrides=overrides)
        out = args.out or cfg.output["dir"]
        checks = args.check.split(",") if args.check else None
        if args.command == "simulate-kinetic":
            run_kinetic(cfg, out)
        elif args.command == "simulate-particles":
            run_particles(cfg, out)
        elif args.command == "equilibrium":
            run_equilibrium(cfg, out)
        elif args.command == "verify":
            traj = io.read_trajectory(args.trajectory or out)
            reports, ok = run_verify(cfg, traj, out, checks)
            for r in reports:
                state = "SKIP" if r.skipped else ("PASS" if r.passed else "FAIL")
                print(f"{state} {r.name} min_margin={r.min_margin:.6g} tol={r.tol:.6g}")
            return 0 if ok else 1
        elif args.command == "subdivide":
            if not (args.trajectory or args.series):
                raise ConfigError("subdivide needs --trajectory or --series")
            traj = io.read_trajectory(args.trajectory) if args.trajectory else None
            run_subdivide(cfg, out, traj, args.series)
        elif args.command == "concentration":
            run_concentration(cfg, out)
        elif args.command == "distances":
            run_distances(cfg, out, args.a, args.b)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"missing file: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
