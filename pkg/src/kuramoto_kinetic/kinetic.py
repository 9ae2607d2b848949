"""Finite-volume solver for the kinetic equation and its observables.

The density is stored fiber by fiber: ``h[j, i]`` is the cell average of the
conditional density of phases given frequency node j, on the uniform grid
theta_i = (i + 1/2) dtheta. All theta integrals use the midpoint rule.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .circle import TWO_PI, Arc, cell_overlap, circle_dist, wrap
from .errors import CFLViolation, PhiUndefined
from .model import R_PHASE_EPS, FrequencyGrid, _order_from_complex

CFL_MAX = 0.45
NORMALIZATION_TOL = 1e-10


def theta_centers(n_theta):
    return (np.arange(n_theta) + 0.5) * (TWO_PI / n_theta)


@dataclass(frozen=True, eq=False)
class KineticState:
    t: float
    grid: FrequencyGrid
    h: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        if h.ndim != 2 or h.shape[0] != self.grid.n:
            raise ValueError("h must have shape (n_omega, n_theta)")
        if np.any(h < -1e-13):
            raise ValueError("densities must be nonnegative")
        mass = h.sum(axis=1) * (TWO_PI / h.shape[1])
        if np.any(np.abs(mass - 1.0) > NORMALIZATION_TOL):
            raise ValueError(f"per-fiber normalization violated (max error {np.abs(mass - 1).max():.3e})")
        h.flags.writeable = False
        object.__setattr__(self, "h", h)

    @property
    def n_theta(self):
        return self.h.shape[1]

    @property
    def dtheta(self):
        return TWO_PI / self.h.shape[1]

    @property
    def theta(self):
        return theta_centers(self.n_theta)

    def masses(self):
        """Atom masses w_j h_ji dtheta."""
        return self.grid.weights[:, None] * self.h * self.dtheta

    def with_h(self, h, t=None):
        return KineticState(self.t if t is None else t, self.grid, h)


# ---------------------------------------------------------------- initial data

def _normalize_rows(h, n_theta):
    h = np.asarray(h, dtype=float)
    return h / (h.sum(axis=1, keepdims=True) * (TWO_PI / n_theta))


def _cell_average(fn, n_theta, n_sub=8):
    dth = TWO_PI / n_theta
    x, wq = np.polynomial.legendre.leggauss(n_sub)
    left = np.arange(n_theta) * dth
    pts = left[:, None] + 0.5 * dth * (x[None, :] + 1.0)
    return (fn(pts) * wq[None, :]).sum(axis=1) * 0.5


def vonmises_bump(grid, n_theta, center=0.0, concentration=2.0, t=0.0):
    prof = _cell_average(lambda th: np.exp(concentration * (np.cos(th - center) - 1.0)), n_theta)
    h = np.tile(prof, (grid.n, 1))
    return KineticState(t, grid, _normalize_rows(h, n_theta))


def two_bump(grid, n_theta, centers=(0.0, np.pi), weights=(0.7, 0.3), widths=(4.0, 4.0), t=0.0):
    """Mixture of von Mises bumps; ``widths`` are concentrations."""
    def fn(th):
        out = np.zeros_like(th)
        for c, w, k in zip(centers, weights, widths):
            bump = np.exp(k * (np.cos(th - c) - 1.0))
            out += w * bump / (TWO_PI * np.i0(k) * np.exp(-k))
        return out
    prof = _cell_average(fn, n_theta)
    return KineticState(t, grid, _normalize_rows(np.tile(prof, (grid.n, 1)), n_theta))


def uniform_state(grid, n_theta, t=0.0):
    return KineticState(t, grid, np.full((grid.n, n_theta), 1.0 / TWO_PI))


def near_uniform(grid, n_theta, amplitude=0.1, mode=1, phase=0.0, t=0.0):
    """(1 + a cos(m (theta - c))) / 2pi; R = a/2 for m = 1."""
    prof = _cell_average(lambda th: 1.0 + amplitude * np.cos(mode * (th - phase)), n_theta)
    return KineticState(t, grid, _normalize_rows(np.tile(prof, (grid.n, 1)), n_theta))


def equilibrium_state(eq, grid, n_theta, t=0.0):
    """Render an equilibrium to the grid, splitting each atom between its two nearest centers."""
    dth = TWO_PI / n_theta
    h = np.zeros((grid.n, n_theta))
    pos = wrap(eq.atoms) / dth - 0.5
    lo = np.floor(pos).astype(int)
    frac = pos - lo
    rows = np.arange(grid.n)
    np.add.at(h, (rows, lo % n_theta), (1.0 - frac) / dth)
    np.add.at(h, (rows, (lo + 1) % n_theta), frac / dth)
    return KineticState(t, grid, h)


def point_mass_state(grid, n_theta, theta_star, t=0.0):
    """All mass in the cell containing theta_star, for every fiber."""
    dth = TWO_PI / n_theta
    i = int(np.floor(wrap(theta_star) / dth)) % n_theta
    h = np.zeros((grid.n, n_theta))
    h[:, i] = 1.0 / dth
    return KineticState(t, grid, h)


# ---------------------------------------------------------------- observables

def _order_complex(h, weights, n_theta):
    dth = TWO_PI / n_theta
    e = np.exp(1j * theta_centers(n_theta))
    return complex(np.dot(weights, h @ e) * dth)


def order_parameter_kinetic(state):
    return _order_from_complex(_order_complex(state.h, state.grid.weights, state.n_theta))


def velocity_field(state, params, at="edges"):
    """v_j(theta) = w_j - K R sin(theta - phi), at cell edges (i+1) dtheta or centers."""
    op = order_parameter_kinetic(state)
    th = theta_centers(state.n_theta)
    if at == "edges":
        th = th + 0.5 * state.dtheta
    return state.grid.nodes[:, None] - params.K * op.R * np.sin(th[None, :] - op.phi)


def _center_velocity(state, params):
    z = _order_complex(state.h, state.grid.weights, state.n_theta)
    R, phi = min(abs(z), 1.0), np.angle(z)
    v = state.grid.nodes[:, None] - params.K * R * np.sin(state.theta[None, :] - phi)
    return v, R, phi


def dissipation(state, params):
    v, _, _ = _center_velocity(state, params)
    return float(np.sum(state.masses() * v * v))


def dissipation_rate_formula(state, params):
    """-K sum_ab (v_a - v_b)^2 cos(theta_a - theta_b) m_a m_b over all cell atoms.

    The double sum factorizes through cos(a - b) = cos a cos b + sin a sin b.
    """
    v, _, _ = _center_velocity(state, params)
    m = state.masses()
    c = np.cos(state.theta)[None, :]
    s = np.sin(state.theta)[None, :]
    c0, s0 = np.sum(m * c), np.sum(m * s)
    c1, s1 = np.sum(m * v * c), np.sum(m * v * s)
    c2, s2 = np.sum(m * v * v * c), np.sum(m * v * v * s)
    return float(-2.0 * params.K * (c2 * c0 + s2 * s0 - c1 * c1 - s1 * s1))


def dissipation_rate_direct(state, params):
    """Unfactorized double sum; O((n_omega n_theta)^2), for small grids only."""
    v, _, _ = _center_velocity(state, params)
    m = state.masses().ravel()
    vv = v.ravel()
    th = np.tile(state.theta, state.grid.n)
    dv = vv[:, None] - vv[None, :]
    cs = np.cos(th[:, None] - th[None, :])
    return float(-params.K * np.sum(dv * dv * cs * m[:, None] * m[None, :]))


def order_rates(state, params):
    """(dR/dt, R dphi/dt) evaluated on the current state."""
    v, R, phi = _center_velocity(state, params)
    if R < R_PHASE_EPS:
        raise PhiUndefined("R below R_PHASE_EPS")
    m = state.masses()
    d = state.theta[None, :] - phi
    Rdot = -float(np.sum(np.sin(d) * v * m))
    Rphidot = float(np.sum(np.cos(d) * v * m))
    return Rdot, Rphidot


def frequency_second_moment(state):
    return float(np.dot(state.grid.weights, state.grid.nodes ** 2))


def arc_mass(state, arc):
    frac = cell_overlap(arc, state.n_theta)
    return float(np.sum(state.masses() * frac[None, :]))


def weighted_square_norm(state, weight=None):
    """sum_j w_j g_j sum_i weight_i h_ji^2 dtheta with g_j = w_j / dw.

    ``weight`` may be None (identically 1), a callable of theta, an array
    over cells, or an array over (fiber, cell).
    """
    if weight is None:
        wt = 1.0
    elif callable(weight):
        wt = np.asarray(weight(state.theta), dtype=float)
    else:
        wt = np.asarray(weight, dtype=float)
    g = state.grid.weights * state.grid.density
    per = np.sum(wt * state.h * state.h, axis=1) * state.dtheta
    return float(np.dot(g, per))


def smooth_cutoff(theta, alpha=np.pi / 6, delta0=0.5, phi=0.0):
    """Smooth indicator of the antipodal arc around phi + pi.

    Equal to 1 for |r| <= pi/2 - alpha and 0 for |r| >= pi/2 - alpha + delta0,
    where r = theta - phi - pi in (-pi, pi].
    """
    scalar = np.ndim(theta) == 0
    r = np.atleast_1d(circle_dist(theta, phi + np.pi)).astype(float)
    a = 0.5 * np.pi - alpha
    b = a + delta0
    out = np.where(r <= a, 1.0, 0.0)
    band = (r > a) & (r < b)
    rb = r[band]
    z = (2.0 * rb - (np.pi - 2.0 * alpha + delta0)) / ((b - rb) * (rb - a))
    out[band] = expit(-z)
    return float(out[0]) if scalar else out.reshape(np.shape(theta))


def chi_minus_weight(state, alpha=np.pi / 6, delta0=0.5):
    op = order_parameter_kinetic(state)
    return smooth_cutoff(state.theta, alpha, delta0, op.phi)


def lateral_arcs(phi, alpha=np.pi / 6):
    """L+ and L- arcs of half-width pi/2 - alpha around phi and phi + pi."""
    w = 0.5 * np.pi - alpha
    return Arc(phi, w), Arc(phi + np.pi, w)


# ---------------------------------------------------------------- time stepping

def _rate(h, nodes, weights, K, dt, check_cfl):
    n_theta = h.shape[1]
    dth = TWO_PI / n_theta
    z = _order_complex(h, weights, n_theta)
    R, phi = min(abs(z), 1.0), np.angle(z)
    edges = (np.arange(n_theta) + 1.0) * dth
    v = nodes[:, None] - K * R * np.sin(edges[None, :] - phi)
    if check_cfl is not None:
        cfl = dt * np.max(np.abs(v)) / dth
        if cfl > CFL_MAX + 1e-12:
            raise CFLViolation(f"CFL number {cfl:.4f} > {CFL_MAX}")
    h_right = np.roll(h, -1, axis=1)
    flux = np.where(v > 0.0, v * h, v * h_right)
    return -(flux - np.roll(flux, 1, axis=1)) / dth, R, phi


def step_kinetic(state, params, dt):
    """One SSP-RK2 step of first-order upwind finite volumes."""
    h, R, phi = _ssp2(state.h, state.grid.nodes, state.grid.weights, params.K, dt)
    return KineticState(state.t + dt, state.grid, h)


def _ssp2(h, nodes, weights, K, dt):
    L1, R, phi = _rate(h, nodes, weights, K, dt, True)
    h1 = h + dt * L1
    L2, _, _ = _rate(h1, nodes, weights, K, dt, True)
    return 0.5 * h + 0.5 * (h1 + dt * L2), R, phi


def stable_dt(grid, n_theta, K, cfl=0.4):
    return cfl * (TWO_PI / n_theta) / (grid.W + K)


@dataclass
class KineticTrajectory:
    """Snapshots every ``stride`` steps plus (R, phi) at every step.

    ``phi_steps`` is unwrapped so that linear interpolation in time is valid.
    """

    params: object
    dt: float
    stride: int
    snapshots: list
    step_times: np.ndarray
    R_steps: np.ndarray
    phi_steps: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])

    @property
    def grid(self):
        return self.snapshots[0].grid

    @property
    def snapshot_dt(self):
        return self.dt * self.stride

    @property
    def dtheta(self):
        return self.snapshots[0].dtheta


def simulate_kinetic(state0, params, dt, T_end, stride=1):
    n_steps = int(round(T_end / dt))
    if abs(n_steps * dt - T_end) > 1e-9 * max(1.0, T_end):
        raise ValueError("T_end must be an integer multiple of dt")
    nodes, weights, K = state0.grid.nodes, state0.grid.weights, params.K
    h = np.array(state0.h)
    snaps = [state0]
    Rs = np.empty(n_steps + 1)
    phis = np.empty(n_steps + 1)
    for n in range(n_steps):
        h, R, phi = _ssp2(h, nodes, weights, K, dt)
        Rs[n], phis[n] = R, phi
        if (n + 1) % stride == 0:
            snaps.append(KineticState(state0.t + (n + 1) * dt, state0.grid, h))
    z = _order_complex(h, weights, h.shape[1])
    Rs[n_steps], phis[n_steps] = min(abs(z), 1.0), np.angle(z)
    times = state0.t + dt * np.arange(n_steps + 1)
    return KineticTrajectory(params, dt, stride, snaps, times, Rs, np.unwrap(phis))
