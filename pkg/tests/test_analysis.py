import numpy as np
import pytest

from kuramoto_kinetic import analysis as an
from kuramoto_kinetic.errors import HypothesisNotMet, NeverEntered, WindowBelowFloor
from kuramoto_kinetic.kinetic import equilibrium_state, near_uniform, simulate_kinetic, uniform_state
from kuramoto_kinetic.model import FrequencyGrid, ModelParams, stable_equilibrium


def synthetic_diagnostics(t, R, Rdot, K=10.0, W=0.0, dtheta=1e-3):
    n = t.size
    z = np.zeros(n)
    return an.TrajectoryDiagnostics(t, R, z, Rdot, an.smooth5(Rdot), Rdot, z, z, z, np.ones(n), z, z, z,
                                    np.full(n, np.nan), K, W, dtheta, float(t[1] - t[0]))


# ---------------------------------------------------------------- inequality checks on runs

def test_inequalities_on_bump_run(bump_run):
    _, d = bump_run
    for check in (an.check_dissipation_bounds, an.check_dissipation_R_relation, an.check_phi_dot,
                  an.check_mass_lateral, an.check_instability, an.check_global_l2):
        rep = check(d)
        assert rep.passed, rep.summary()


def test_dissipation_relation_uniform_state_closed_form():
    p = ModelParams(10.0, 0.1)
    grid = FrequencyGrid.from_density(0.1, 9)
    tr = simulate_kinetic(uniform_state(grid, 64), p, 1e-3, 0.05, stride=5)
    d = an.compute_diagnostics(tr, w2g=False)
    rep = an.check_dissipation_R_relation(d)
    # K dR^2/dt = 0 and I = sum w_j omega_j^2 <= W^2/3
    assert rep.min_margin >= 0.0
    assert np.allclose(d.I, np.dot(grid.weights, grid.nodes ** 2))
    assert an.check_dissipation_bounds(d).passed


def test_equilibrium_run_margins_at_floor():
    p = ModelParams(10.0, 0.1)
    grid = FrequencyGrid.from_density(0.1, 9)
    eq = stable_equilibrium(grid, p)
    tr = simulate_kinetic(equilibrium_state(eq, grid, 256), p, 1e-3, 0.5, stride=10)
    d = an.compute_diagnostics(tr, eq=eq)
    assert an.check_dissipation_bounds(d).passed
    assert an.check_dissipation_R_relation(d).passed
    assert an.check_phi_dot(d).passed
    assert np.max(d.W2g_to_eq) < 3 * d.dtheta


def test_phi_dot_skipped_when_incoherent():
    t = np.linspace(0, 1, 11)
    d = synthetic_diagnostics(t, np.full(11, 0.01), np.zeros(11))
    assert an.check_phi_dot(d).skipped


def test_reports_reproducible(bump_run):
    traj, d = bump_run
    d2 = an.compute_diagnostics(traj)
    a, b = an.check_instability(d), an.check_instability(d2)
    assert np.array_equal(a.margins, b.margins)


# ---------------------------------------------------------------- order-parameter bounds

def test_entropy_production_gain_synthetic():
    R0, c, K = 0.3, 1.0, 10.0
    t = np.linspace(0, 0.5, 5001)
    R = np.sqrt(R0 ** 2 + c * t)
    Rdot = c / (2 * R)
    d = synthetic_diagnostics(t, R, Rdot, K)
    lam = an.default_lambda(R0)
    rep = an.check_entropy_production_gain(d, 0.0, lam)
    assert rep.passed
    target = lam ** 4 * R0 ** 3 / 40
    assert rep.extra["d_found"] == pytest.approx(target / c, abs=2 * (t[1] - t[0]))
    assert rep.extra["d_found"] <= rep.extra["d_max"]


def test_entropy_production_gain_hypothesis_unmet():
    t = np.linspace(0, 0.5, 501)
    d = synthetic_diagnostics(t, np.full(501, 0.3), np.zeros(501))
    with pytest.raises(HypothesisNotMet):
        an.check_entropy_production_gain(d, 0.0, an.default_lambda(0.3))


def test_R_lower_bound_lambda_range():
    t = np.linspace(0, 1, 101)
    d = synthetic_diagnostics(t, np.full(101, 0.5), np.zeros(101))
    with pytest.raises(HypothesisNotMet):
        an.check_R_lower_bound(d, 0.9)
    assert an.check_R_lower_bound(d, 1 - 0.5 / 240).passed


def test_R_lower_bound_on_run(bump_run):
    _, d = bump_run
    assert an.check_R_lower_bound(d, an.default_lambda(d.R0)).passed


def test_decrease_rate_shallow_dip_closed_form():
    R0, K = 0.4, 10.0
    lam = an.default_lambda(R0)
    t = np.linspace(0, 1, 1001)
    R = R0 * (1 - 0.001 * np.sin(np.pi * t))
    Rdot = -R0 * 0.001 * np.pi * np.cos(np.pi * t)
    d = synthetic_diagnostics(t, R, Rdot, K)
    rep = an.check_decrease_rate(d, lam)
    # the qualifying interval starts where R' <= 0 and R >= R0: t = 0 is excluded (R' < 0 there)
    assert rep.hypotheses["intervals"]
    s = int(np.round(rep.hypotheses["intervals"][0][0] / 1e-3))
    c2g = (1 - lam) * R0 / 5
    g = np.arccos(np.sqrt(c2g))
    Rs = R[s]
    cubic = K * c2g / (2 * np.sin(g)) * (-Rs ** 3 + (lam * R0 + 0.6 * (1 - lam) * R0) * Rs ** 2
                                         - 0.6 * (1 - lam) * lam ** 2 * R0 ** 3)
    assert rep.margins[0] == pytest.approx(2 * Rs * Rdot[s] - cubic, abs=1e-15)


def test_decrease_rate_no_interval_is_empty_pass():
    t = np.linspace(0, 1, 101)
    d = synthetic_diagnostics(t, 0.3 + t, np.full(101, 1.0))
    rep = an.check_decrease_rate(d, an.default_lambda(0.3))
    assert rep.passed and rep.times.size == 0


# ---------------------------------------------------------------- decay fits

def test_fit_decay_exact_exponential():
    t = np.linspace(0, 3, 301)
    rate, r2, _ = an.fit_decay_rate(t, np.exp(-3 * t), 0.0, 3.0, floor=0.0)
    assert rate == pytest.approx(3.0, abs=1e-9)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_decay_with_floor():
    t = np.linspace(0, 6, 601)
    y = np.exp(-2 * t) + 1e-4
    rate, r2, floor = an.fit_decay_rate(t, y, 0.0, 2.5)
    assert floor == pytest.approx(y[-1])
    assert rate == pytest.approx(2.0, rel=0.05)
    assert r2 > 0.99


def test_fit_decay_window_below_floor():
    t = np.linspace(0, 1, 11)
    with pytest.raises(WindowBelowFloor):
        an.fit_decay_rate(t, np.ones(11), 0.0, 1.0)


# ---------------------------------------------------------------- transport and convexity

def test_transport_dissipation_on_run(bump_run):
    traj, d = bump_run
    rep = an.check_transport_dissipation(traj, d, n_pairs=10)
    assert rep.passed, rep.summary()


def test_convexity_regime_bump(bump_run):
    _, d = bump_run
    rep, T0 = an.check_convexity_regime(d)
    assert rep.passed
    assert rep.extra["within_bound"]
    assert T0 == rep.extra["T0_meas"]


def test_convexity_regime_started_inside():
    p = ModelParams(10.0, 0.1)
    grid = FrequencyGrid.from_density(0.1, 9)
    eq = stable_equilibrium(grid, p)
    tr = simulate_kinetic(equilibrium_state(eq, grid, 128), p, 1e-3, 0.3, stride=10)
    d = an.compute_diagnostics(tr, eq=eq)
    _, T0 = an.check_convexity_regime(d)
    assert T0 == 0.0


def test_convexity_regime_never_entered():
    p = ModelParams(1.0, 0.8)
    grid = FrequencyGrid.from_density(0.8, 9)
    tr = simulate_kinetic(near_uniform(grid, 64, 0.2), p, 1e-2, 2.0, stride=10)
    d = an.compute_diagnostics(tr, w2g=False)
    with pytest.raises(NeverEntered):
        an.check_convexity_regime(d)


# ---------------------------------------------------------------- uniqueness

def test_uniqueness_recovers_rotation():
    p = ModelParams(2.0)
    grid = FrequencyGrid.from_density(0.5, 7)
    eq = stable_equilibrium(grid, p)
    rep = an.check_uniqueness(eq, eq.rotated(1.0))
    assert rep.passed
    assert np.angle(np.exp(1j * (rep.extra["shift"] + 1.0))) == pytest.approx(0.0, abs=1e-8)


def test_uniqueness_reject_different_marginals():
    p = ModelParams(2.0)
    a = stable_equilibrium(FrequencyGrid.from_density(0.5, 7), p)
    b = stable_equilibrium(FrequencyGrid.from_density(0.4, 7), p)
    with pytest.raises(HypothesisNotMet):
        an.check_uniqueness(a, b)
