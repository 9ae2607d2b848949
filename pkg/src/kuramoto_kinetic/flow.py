"""Characteristic flow of the kinetic velocity field and evolving arc sets."""
from dataclasses import dataclass

import numpy as np

from .circle import TWO_PI, Arc, cell_overlap, circle_dist, hull_arc, wrap
from .errors import HypothesisNotMet, OutOfRange
from .kinetic import order_parameter_kinetic
from .reports import InequalityReport


@dataclass
class FlowField:
    """theta' = w - K R(s) sin(theta - phi(s)) with (R, phi) interpolated linearly in s."""

    times: np.ndarray
    R: np.ndarray
    phi: np.ndarray  # unwrapped
    K: float
    dt: float
    nodes: np.ndarray = None

    @classmethod
    def from_trajectory(cls, traj):
        return cls(traj.step_times, traj.R_steps, traj.phi_steps, traj.params.K, traj.dt,
                   np.array(traj.grid.nodes))

    @classmethod
    def from_particles(cls, traj):
        return cls(traj.times, traj.R, traj.phi, traj.params.K, traj.dt, None)

    @classmethod
    def frozen(cls, R, phi, K, t_end, dt, nodes=None):
        n = int(round(t_end / dt))
        t = dt * np.arange(n + 1)
        return cls(t, np.full(n + 1, float(R)), np.full(n + 1, float(phi)), K, dt,
                   None if nodes is None else np.asarray(nodes, dtype=float))

    def coefficients(self, s):
        return np.interp(s, self.times, self.R), np.interp(s, self.times, self.phi)

    def velocity(self, theta, omega, s):
        R, phi = self.coefficients(s)
        return omega - self.K * R * np.sin(theta - phi)

    def _omega(self, fiber=None, omega=None):
        if omega is not None:
            return np.asarray(omega, dtype=float)
        if fiber is None:
            raise ValueError("give a fiber index or a frequency")
        return self.nodes[fiber]


def flow_lifted(field, theta, t0, t, fiber=None, omega=None, dt=None):
    """RK4 along the characteristic; returns lifted phases (no wrapping)."""
    lo, hi = field.times[0] - 1e-12, field.times[-1] + 1e-12
    if not (lo <= t0 <= hi and lo <= t <= hi):
        raise OutOfRange(f"[{min(t0, t)}, {max(t0, t)}] outside stored range [{field.times[0]}, {field.times[-1]}]")
    om = field._omega(fiber, omega)
    x = np.array(theta, dtype=float)
    span = t - t0
    if span == 0:
        return x
    h = field.dt if dt is None else dt
    n = max(1, int(np.ceil(abs(span) / h - 1e-9)))
    h = span / n
    s = t0
    for _ in range(n):
        k1 = field.velocity(x, om, s)
        k2 = field.velocity(x + 0.5 * h * k1, om, s + 0.5 * h)
        k3 = field.velocity(x + 0.5 * h * k2, om, s + 0.5 * h)
        k4 = field.velocity(x + h * k3, om, s + h)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        s += h
    return x


def flow_point(field, theta, t0, t, fiber=None, omega=None):
    return wrap(flow_lifted(field, theta, t0, t, fiber, omega))


@dataclass
class EvolvingSet:
    """Per-fiber lists of arcs born at ``birth``; ``omegas[j]`` is fiber j's frequency."""

    birth: float
    omegas: np.ndarray
    arcs: list

    @classmethod
    def product(cls, arc, omegas, birth=0.0):
        omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
        return cls(birth, omegas, [[arc] for _ in omegas])

    def projection(self):
        """Hull arc of the theta-projection (None when the set is empty)."""
        return hull_arc([a for fiber in self.arcs for a in fiber])

    def fiber_weights(self, n_theta):
        """Fractional cell coverage, shape (n_fibers, n_theta)."""
        out = np.zeros((len(self.arcs), n_theta))
        for j, fiber in enumerate(self.arcs):
            for a in fiber:
                out[j] += cell_overlap(a, n_theta)
        return np.clip(out, 0.0, 1.0)

    def sup_cos(self, phi):
        vals = [a.sup_cos(phi) for fiber in self.arcs for a in fiber]
        return max(vals) if vals else -1.0


def evolve_set(field, aset, t):
    if t < aset.birth - 1e-12:
        raise OutOfRange("cannot evolve a set backwards past its birth")
    new = []
    for om, fiber in zip(aset.omegas, aset.arcs):
        out = []
        for a in fiber:
            if a.is_full:
                out.append(a)
                continue
            ends = flow_lifted(field, np.array([a.start, a.start + a.length]), aset.birth, t,
                               omega=om)
            out.append(Arc.from_endpoints(ends[0], ends[1] - ends[0]))
        new.append(out)
    return EvolvingSet(t, aset.omegas, new)


def evolve_tracers(field, aset, t, n_tracers=64):
    """Dense-tracer image of each arc, as arrays of lifted phases per fiber."""
    out = []
    for om, fiber in zip(aset.omegas, aset.arcs):
        pts = []
        for a in fiber:
            x = a.start + np.linspace(0.0, a.length, n_tracers)
            pts.append(flow_lifted(field, x, aset.birth, t, omega=om))
        out.append(pts)
    return out


def arc_neighborhood(aset, eps):
    """{theta : inf over the set of cos(theta - theta*) >= 1 - eps}.

    For a set inside an arc of half-width w this is the concentric arc of
    half-width arccos(1 - eps) - w, empty when that is negative.
    """
    if not (0.0 < eps < 2.0):
        raise ValueError("eps must lie in (0, 2)")
    hull = aset.projection()
    if hull is None:
        return EvolvingSet(aset.birth, aset.omegas, [[] for _ in aset.omegas])
    rad = float(np.arccos(1.0 - eps))
    if hull.is_full or hull.half_width > rad:
        arcs = []
    else:
        arcs = [Arc(hull.center, min(rad - hull.half_width, np.pi))]
    return EvolvingSet(aset.birth, aset.omegas, [list(arcs) for _ in aset.omegas])


def min_pair_cosine(aset, n_samples=16, use_hull=False):
    """inf of cos(theta - theta') over endpoint and sample pairs of the projected set."""
    if use_hull:
        hull = aset.projection()
        if hull is None:
            return 1.0
        return float(np.cos(min(hull.length, np.pi)))
    pts = []
    for fiber in aset.arcs:
        for a in fiber:
            pts.append(a.start + np.linspace(0.0, a.length, n_samples))
    if not pts:
        return 1.0
    p = np.concatenate(pts)
    return float(np.min(np.cos(p[:, None] - p[None, :])))


def set_mass(state, aset):
    """rho of a per-fiber set, for sets defined on the state's fibers."""
    wts = aset.fiber_weights(state.n_theta)
    return float(np.sum(state.masses() * wts))


def check_attractor(field, traj, aset, W, tol=None, n_probe=None):
    """Pairwise-cosine contraction bound along the flow from the set's birth.

    With m the initial mass, p the initial min pair cosine and
    sigma = m p - (1 - m), requires sigma > 0 and W^2/K^2 <= (1 - p) sigma^2 / 4.
    """
    K = field.K
    idx0 = int(np.argmin(np.abs(traj.times - aset.birth)))
    state0 = traj.snapshots[idx0]
    m = set_mass(state0, aset)
    p = min_pair_cosine(aset, use_hull=True)
    sigma = m * p - (1.0 - m)
    hyp = {"m": m, "p": p, "sigma": sigma, "W_over_K_sq": (W / K) ** 2,
           "cali_rhs": (1.0 - p) * sigma ** 2 / 4.0 if sigma > 0 else None}
    if sigma <= 0 or (W / K) ** 2 > (1.0 - p) * sigma ** 2 / 4.0:
        raise HypothesisNotMet(f"attractor hypotheses fail: {hyp}")
    times = traj.times[idx0:]
    if n_probe is not None:
        times = times[np.linspace(0, times.size - 1, n_probe).astype(int)]
    margins = []
    cur = aset
    for t in times:
        cur = evolve_set(field, cur, t)
        Pt = min_pair_cosine(cur, use_hull=True)
        bound = max((1.0 - p) * np.exp(-K * sigma * (t - aset.birth) / 4.0),
                    4.0 * W ** 2 / (sigma ** 2 * K ** 2))
        margins.append(bound - (1.0 - Pt))
    if tol is None:
        tol = 4.0 * (traj.dtheta + traj.dt)
    return InequalityReport("attractor_pair_cosine", times, margins, tol, hypotheses=hyp)


def sliding_square_norm(traj, aset, times=None, tol=None, field=None):
    """f^2 on the transported set and the margin of its growth bound.

    d/dt f^2(A_t) <= K R sup_{A_t} cos(theta - phi) f^2(A_t), derivative by
    centered differences between snapshots.
    """
    from .kinetic import weighted_square_norm

    field = FlowField.from_trajectory(traj) if field is None else field
    all_t = traj.times
    sel = np.nonzero(all_t >= aset.birth - 1e-12)[0]
    if times is not None:
        sel = sel[np.isin(np.round(all_t[sel], 12), np.round(np.asarray(times), 12))]
    vals, sups, Rs = [], [], []
    cur = aset
    for i in sel:
        st = traj.snapshots[i]
        cur = evolve_set(field, cur, max(all_t[i], cur.birth))
        vals.append(weighted_square_norm(st, cur.fiber_weights(st.n_theta)))
        op = order_parameter_kinetic(st)
        sups.append(cur.sup_cos(op.phi))
        Rs.append(op.R)
    vals, sups, Rs = map(np.asarray, (vals, sups, Rs))
    t = all_t[sel]
    if t.size < 3:
        return vals, InequalityReport.skip("sliding_norm", "need three snapshots")
    h = np.diff(t)
    d = (vals[2:] - vals[:-2]) / (t[2:] - t[:-2])
    rhs = traj.params.K * Rs[1:-1] * sups[1:-1] * vals[1:-1]
    if tol is None:
        tol = sliding_tolerance(traj, vals.max())
    rep = InequalityReport("sliding_norm", t[1:-1], rhs - d, tol)
    rep.extra["f2"] = vals.tolist()
    rep.extra["max_step"] = float(h.max())
    return vals, rep


# the transported-set norm picks up O(dtheta) boundary errors from fractional
# cell overlap, amplified by the field strength K
C_SLIDING = 20.0


def sliding_tolerance(traj, f2_max):
    K = traj.params.K
    return C_SLIDING * K * (traj.dtheta + traj.snapshot_dt) * f2_max
