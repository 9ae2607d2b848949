"""Monte Carlo experiments with i.i.d. particle data drawn from a kinetic state.

Sampling uses Philox streams keyed by (seed, trial), so a trial's batch does
not depend on how many other trials run or in which order.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .circle import TWO_PI, Arc, wrap
from .errors import HypothesisNotMet
from .kinetic import order_parameter_kinetic
from .model import ParticleEnsemble
from .particles import integrate_particles
from .reports import InequalityReport
from .transport import ProductMeasure, scaled_w2


@dataclass
class SampleBatch:
    seed: int
    trial: int
    N: int
    ensemble: ParticleEnsemble


def trial_rng(seed, trial=0):
    ss = np.random.SeedSequence([int(seed), int(trial)])
    return np.random.Generator(np.random.Philox(ss))


def sample_initial(f0, N, seed, trial=0):
    """Draw N i.i.d. oscillators from the law of f0.

    The fiber is picked by its weight and the frequency jittered uniformly
    over the fiber cell; the phase cell is picked from that fiber's density
    and the phase jittered uniformly inside the cell.
    """
    rng = trial_rng(seed, trial)
    g = f0.grid
    fib = rng.choice(g.n, size=N, p=g.weights / g.weights.sum())
    om = g.nodes[fib] + (rng.random(N) - 0.5) * (g.dw if g.n > 1 else 0.0)
    cdf = np.cumsum(f0.h, axis=1)
    cdf /= cdf[:, -1:]
    u = rng.random(N)
    cells = np.minimum((cdf[fib] < u[:, None]).sum(axis=1), f0.n_theta - 1)
    th = (cells + rng.random(N)) * f0.dtheta
    return SampleBatch(int(seed), int(trial), int(N), ParticleEnsemble(wrap(th), om, check_centering=False))


def wilson_interval(k, n, level=0.95):
    if n == 0:
        return 0.0, 1.0
    z = norm.ppf(0.5 + level / 2)
    p = k / n
    den = 1 + z * z / n
    c = (p + z * z / (2 * n)) / den
    h = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, c - h), min(1.0, c + h)


@dataclass
class ConcentrationReport:
    Ns: list
    eps: np.ndarray
    trials: int
    distances: np.ndarray  # (len(Ns), trials)
    counts: np.ndarray  # (len(Ns), len(eps)) exceedances
    seed: int = 0
    envelope: dict = field(default_factory=dict)

    @property
    def freqs(self):
        return self.counts / max(self.trials, 1)

    @property
    def medians(self):
        return np.median(self.distances, axis=1) if self.trials else np.full(len(self.Ns), np.nan)

    def intervals(self, level=0.95):
        return np.array([[wilson_interval(k, self.trials, level) for k in row] for row in self.counts])

    def ci_violations(self, level=0.95):
        """(i, e) pairs where frequency at Ns[i+1] is significantly above Ns[i]."""
        ci = self.intervals(level)
        out = []
        for i in range(len(self.Ns) - 1):
            for e in range(len(self.eps)):
                if ci[i + 1, e, 0] > ci[i, e, 1]:
                    out.append((i, e))
        return out

    def rows(self):
        for i, n in enumerate(self.Ns):
            for e, eps in enumerate(self.eps):
                yield n, float(eps), float(self.freqs[i, e]), self.trials


def quantized_law(f0, min_mass=0.0):
    return ProductMeasure.from_state(f0, min_mass)


def distance_to_law(batch, law, params):
    return scaled_w2(ProductMeasure.from_ensemble(batch.ensemble), law, params).distance


def concentration_curve(f0, Ns, trials, eps_grid, params, seed=0):
    """Exceedance frequencies of SW2(mu_0^N, f0) >= eps, with a fitted exp(-c sqrt(N)) envelope."""
    law = quantized_law(f0)
    Ns = [int(n) for n in Ns]
    eps = np.asarray(eps_grid, dtype=float)
    dist = np.zeros((len(Ns), trials))
    for i, n in enumerate(Ns):
        for k in range(trials):
            # one stream per (N, trial)
            b = sample_initial(f0, n, seed, trial=i * 1_000_003 + k)
            dist[i, k] = distance_to_law(b, law, params)
    counts = np.array([[int(np.sum(dist[i] >= e)) for e in eps] for i in range(len(Ns))]) \
        if trials else np.zeros((len(Ns), eps.size), dtype=int)
    rep = ConcentrationReport(Ns, eps, trials, dist, counts, seed)
    rep.envelope = _fit_envelope(rep)
    return rep


def _fit_envelope(rep):
    """Frequencies at eps_N = N^(-1/8) against C1 exp(-C2 sqrt(N))."""
    if rep.trials == 0:
        return {}
    f = np.array([np.mean(rep.distances[i] >= n ** (-1 / 8)) for i, n in enumerate(rep.Ns)])
    x = np.sqrt(np.asarray(rep.Ns, dtype=float))
    pos = f > 0
    if pos.sum() >= 2:
        c2 = -np.polyfit(x[pos], np.log(f[pos]), 1)[0]
    else:
        c2 = 0.0
    c1 = float(np.max(f * np.exp(c2 * x))) if f.size else 0.0
    return {"freq_at_scale": f.tolist(), "C1": c1, "C2": float(c2),
            "bounded": bool(np.all(f <= c1 * np.exp(-c2 * x) + 1e-12))}


def stability_tolerance(kin_state, params, dt):
    """Quantization of the kinetic state plus one step of time error, in the scaled metric."""
    g = kin_state.grid
    dw = g.dw if g.n > 1 else 0.0
    return float(np.hypot(kin_state.dtheta, dw / params.K) + params.K * dt)


def stability_check(kin_traj, part_traj, params, times, tol=None):
    """SW2(f_t, mu_t^N) <= exp(5 K t / 2) SW2(f_0, mu_0^N) + tol at the given times."""
    kt = kin_traj.times
    pt = part_traj.times
    base = None
    ts, margins, lhs_all = [], [], []
    for t in times:
        i = int(np.argmin(np.abs(kt - t)))
        j = int(np.argmin(np.abs(pt - t)))
        if abs(kt[i] - t) > 1e-9 or abs(pt[j] - t) > 1e-9:
            raise ValueError(f"time {t} not stored in both trajectories")
        mu = ProductMeasure.from_ensemble(part_traj.state(j))
        lhs = scaled_w2(mu, ProductMeasure.from_state(kin_traj.snapshots[i]), params).distance
        if base is None:
            i0 = int(np.argmin(np.abs(kt - kt[0])))
            mu0 = ProductMeasure.from_ensemble(part_traj.state(0))
            base = lhs if t == kt[0] else scaled_w2(mu0, ProductMeasure.from_state(kin_traj.snapshots[i0]),
                                                   params).distance
        rhs = np.exp(2.5 * params.K * (t - kt[0])) * base
        ts.append(float(t))
        margins.append(rhs - lhs)
        lhs_all.append(lhs)
    if tol is None:
        tol = stability_tolerance(kin_traj.snapshots[0], params, kin_traj.dt)
    rep = InequalityReport("stability_sw2", ts, margins, tol)
    rep.extra.update(sw2=lhs_all, sw2_initial=base)
    return rep


def estimate_N_star(T0, K):
    """Smallest N with N^(-1/8) exp(5 K T0 / 2) <= 500^(-1/2), and the window length map."""
    if T0 < 0:
        raise ValueError("T0 must be nonnegative")
    # (sqrt(500) e^{2.5 K T0})^8 = 500^4 e^{20 K T0}, exact for T0 = 0
    expo = 20.0 * K * T0
    if expo == 0.0:
        n_star = 500 ** 4
    else:
        n_star = int(np.ceil(float(500 ** 4) * np.exp(expo)))
    return n_star


def window_length(N, N_star, K):
    """d_N = 5/(101 K) log(N / N*), negative below N*."""
    return 5.0 / (101.0 * K) * np.log(N / N_star)


@dataclass
class MassDiameterReport:
    T0: float
    probe_s: np.ndarray
    horizon: np.ndarray  # t - s offsets
    mass: np.ndarray  # (trials, n_s, n_t)
    diam: np.ndarray
    passM: np.ndarray
    passD: np.ndarray
    N: int
    W: float
    K: float
    window: dict = field(default_factory=dict)

    @property
    def fraction_M(self):
        return float(self.passM.mean()) if self.passM.size else float("nan")

    @property
    def fraction_D(self):
        return float(self.passD.mean()) if self.passD.size else float("nan")

    def rows(self):
        for k in range(self.mass.shape[0]):
            for i, s in enumerate(self.probe_s):
                for j, h in enumerate(self.horizon):
                    yield (k, float(s), float(s + h), float(self.mass[k, i, j]), float(self.diam[k, i, j]),
                           bool(self.passM[k, i, j]), bool(self.passD[k, i, j]))


def arc_from_tracers(lo, hi):
    """Arc between lifted tracer positions lo <= hi (full circle if they span 2 pi)."""
    length = hi - lo
    if length >= TWO_PI:
        return Arc.full()
    return Arc.from_endpoints(lo, max(length, 0.0))


def evolve_arc_with_particles(ens, arc, params, W, horizon, dt):
    """Joint RK4 of the particles and two endpoint tracers (w = -W at the start, +W at the end).

    The image of arc x [-W, W] under the flow is the arc between these two
    characteristics. Returns (trajectory, lo, hi) with lifted endpoint series.
    """
    tr = np.array([arc.start, arc.start + arc.length])
    traj = integrate_particles(ens, params, horizon, dt, tracers=tr, tracer_freqs=np.array([-W, W]))
    return traj, traj.tracers[:, 0], traj.tracers[:, 1]


def _mass_in(phases, lo, hi):
    # fraction of phases inside the arc [lo, hi] of the circle
    if hi - lo >= TWO_PI:
        return 1.0
    d = np.mod(phases - lo, TWO_PI)
    return float(np.mean(d <= hi - lo + 1e-15))


def mass_diameter_experiment(f0, params, N, trials, L, T0, probe_s, horizon, dt, seed=0):
    """(M) and (D) bounds for arcs L transported from probe times s by the particle field.

    (M): mu_t(L_s(t) x R) >= 1 - exp(-K (s - T0)/20) / 5;
    (D): diam L_s(t) <= max{4/5 exp(-K (t - s)/20), 12 W/K}.
    ``horizon`` lists the offsets t - s (must be multiples of dt, starting at 0).
    """
    K, W = params.K, params.W
    if abs(L.length - 0.4) > 1e-12:
        raise HypothesisNotMet("L must have diameter 2/5")
    probe_s = np.asarray(probe_s, dtype=float)
    horizon = np.asarray(horizon, dtype=float)
    if np.any(probe_s < T0 - 1e-12):
        raise HypothesisNotMet("probe times must not precede T0")
    h_steps = np.round(horizon / dt).astype(int)
    s_steps = np.round(probe_s / dt).astype(int)
    n_h = int(h_steps.max()) if h_steps.size else 0
    shape = (trials, probe_s.size, horizon.size)
    mass, diam = np.zeros(shape), np.zeros(shape)
    for k in range(trials):
        ens = sample_initial(f0, N, seed, trial=k).ensemble
        if probe_s.size == 0:
            continue
        pre = integrate_particles(ens, params, s_steps.max() * dt, dt)
        for i, n in enumerate(s_steps):
            start = ParticleEnsemble(pre.lifted[n], ens.freqs, check_centering=False)
            tr, lo, hi = evolve_arc_with_particles(start, L, params, W, n_h * dt, dt)
            for j, m in enumerate(h_steps):
                mass[k, i, j] = _mass_in(tr.lifted[m], lo[m], hi[m])
                diam[k, i, j] = min(max(hi[m] - lo[m], 0.0), TWO_PI)
    boundM = 1.0 - np.exp(-K * (probe_s - T0) / 20.0) / 5.0
    boundD = np.maximum(0.8 * np.exp(-K * horizon / 20.0), 12.0 * W / K)
    passM = mass >= boundM[None, :, None] - 1e-12
    passD = diam <= boundD[None, None, :] + 1e-12
    return MassDiameterReport(T0, probe_s, horizon, mass, diam, passM, passD, N, W, K)


def limit_arc(f_inf_state, half_width=0.2):
    """Arc of the given half-width centered at the phase of a (near-)stationary state."""
    return Arc(order_parameter_kinetic(f_inf_state).phi, half_width)


def corollary_entry_time(times, w2_to_eq, K, floor_time=None):
    """First time T after which w2_to_eq(t) <= exp(-K (t - T)/40) / sqrt(500) for the rest of the run.

    W2g dominates SW2, so this certifies the distance condition used at T0
    in the mass-concentration argument.
    """
    t = np.asarray(times, dtype=float)
    w = np.asarray(w2_to_eq, dtype=float)
    for i in range(t.size):
        if np.all(w[i:] <= np.exp(-K * (t[i:] - t[i]) / 40.0) / np.sqrt(500.0)):
            return float(t[i])
    from .errors import NeverEntered
    raise NeverEntered("distance condition never holds for the rest of the run")
