"""Inequality checks along kinetic trajectories, decay fits and uniqueness.

Every check returns an InequalityReport whose margin is RHS - LHS (so a
pass means margin >= -tol). Tolerances are explicit functions of the grid
spacing, the snapshot spacing and the coupling, with the multiplying
constants exposed as module-level defaults.
"""
from dataclasses import dataclass, field

import numpy as np

from .circle import TWO_PI, Arc, circle_dist, signed_diff
from .errors import HypothesisNotMet, NeverEntered, WindowBelowFloor
from .kinetic import (arc_mass, chi_minus_weight, dissipation, dissipation_rate_formula,
                      lateral_arcs, order_parameter_kinetic, order_rates, weighted_square_norm)
from .model import R_PHASE_EPS, EquilibriumState, stable_equilibrium
from .reports import InequalityReport
from .transport import fibered_w2

ALPHA = np.pi / 6
BETA = np.pi / 3
DELTA0 = 0.5
R_MIN_PHASE = 0.05

# tolerance multipliers (see README, "Tolerances")
C_DIS = 5.0
C_DISR = 5.0
C_PHI = 5.0
C_LATERAL = 5.0
C_INST = 5.0
C_GL2 = 5.0
C_CONVEX = 5.0
C_TRANSPORT = 5.0


@dataclass
class TrajectoryDiagnostics:
    times: np.ndarray
    R: np.ndarray
    phi: np.ndarray  # unwrapped
    Rdot: np.ndarray  # centered differences
    Rdot_smooth: np.ndarray
    Rdot_formula: np.ndarray
    Rphidot_formula: np.ndarray
    I: np.ndarray
    dIdt_formula: np.ndarray
    f2_total: np.ndarray
    f2_chi_minus: np.ndarray
    mass_lateral_out: np.ndarray
    mass_outside_beta: np.ndarray
    W2g_to_eq: np.ndarray
    K: float
    W: float
    dtheta: float
    dt: float
    alpha: float = ALPHA
    beta: float = BETA
    meta: dict = field(default_factory=dict)

    @property
    def R0(self):
        return float(self.R[0])

    @property
    def dR2dt(self):
        return 2.0 * self.R * self.Rdot_formula

    @property
    def h(self):
        return self.dtheta + self.dt


def smooth5(x):
    """Centered 5-point moving average, shrinking the window at the ends."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    n = x.size
    for i in range(n):
        r = min(2, i, n - 1 - i)
        out[i] = x[i - r:i + r + 1].mean()
    return out


def compute_diagnostics(traj, eq=None, alpha=ALPHA, beta=BETA, delta0=DELTA0, w2g=True):
    """Evaluate all scalar observables on every snapshot.

    ``eq`` is the limiting equilibrium. If omitted it is solved from the
    frequency grid, with phase fixed to the final phase of the run.
    """
    p = traj.params
    snaps = traj.snapshots
    t = traj.times
    n = len(snaps)
    R = np.empty(n)
    phi = np.empty(n)
    I = np.empty(n)
    dI = np.empty(n)
    Rd = np.full(n, np.nan)
    Rpd = np.full(n, np.nan)
    f2 = np.empty(n)
    f2c = np.empty(n)
    lat = np.empty(n)
    outb = np.empty(n)
    for k, s in enumerate(snaps):
        op = order_parameter_kinetic(s)
        R[k], phi[k] = op.R, op.phi
        I[k] = dissipation(s, p)
        dI[k] = dissipation_rate_formula(s, p)
        if op.R >= R_PHASE_EPS:
            Rd[k], Rpd[k] = order_rates(s, p)
        f2[k] = weighted_square_norm(s)
        f2c[k] = weighted_square_norm(s, chi_minus_weight(s, alpha, delta0))
        lp, lm = lateral_arcs(op.phi, alpha)
        lat[k] = max(0.0, 1.0 - arc_mass(s, lp) - arc_mass(s, lm))
        outb[k] = max(0.0, 1.0 - arc_mass(s, Arc(op.phi, 0.5 * np.pi - beta)))
    phi = np.unwrap(phi)
    W2 = np.full(n, np.nan)
    if w2g:
        if eq is None:
            try:
                eq = stable_equilibrium(traj.grid, p, phi[-1])
            except Exception:
                eq = None
        if eq is not None:
            eqr = eq.rotated(phi[-1] - eq.phi_inf)
            W2 = np.array([fibered_w2(s, eqr) for s in snaps])
    Rdot = np.gradient(R, t) if n > 1 else np.zeros(n)
    return TrajectoryDiagnostics(t, R, phi, Rdot, smooth5(Rdot), np.nan_to_num(Rd),
                                 np.nan_to_num(Rpd), I, dI, f2, f2c, lat, outb, W2,
                                 p.K, p.W, traj.dtheta, traj.snapshot_dt, alpha, beta,
                                 {"R_defined": ~np.isnan(Rd)})


def _centered(x, t):
    return (x[2:] - x[:-2]) / (t[2:] - t[:-2])


# ---------------------------------------------------------------- dissipation

def check_dissipation_bounds(d, c_tol=C_DIS):
    """-2KR I <= dI/dt <= 2K I, pointwise (formula and differences) and integrated."""
    K, t, I, R = d.K, d.times, d.I, d.R
    tol = c_tol * d.h * K ** 2 * float(I.max())
    lo_f = d.dIdt_formula + 2 * K * R * I
    up_f = 2 * K * I - d.dIdt_formula
    fd = _centered(I, t)
    lo_d = fd + 2 * K * R[1:-1] * I[1:-1]
    up_d = 2 * K * I[1:-1] - fd
    intR = np.concatenate([[0.0], np.cumsum(0.5 * (R[1:] + R[:-1]) * np.diff(t))])
    lo_i = I - I[0] * np.exp(-2 * K * intR)
    up_i = I[0] * np.exp(2 * K * (t - t[0])) - I
    m = np.minimum(np.minimum(lo_f, up_f), np.minimum(lo_i, up_i))
    m[1:-1] = np.minimum(m[1:-1], np.minimum(lo_d, up_d))
    rep = InequalityReport("dissipation_bounds", t, m, tol)
    rep.extra.update(formula_min=float(min(lo_f.min(), up_f.min())),
                     fd_min=float(min(lo_d.min(), up_d.min())) if fd.size else None,
                     integrated_min=float(min(lo_i.min(), up_i.min())),
                     fd_vs_formula_max=float(np.max(np.abs(fd - d.dIdt_formula[1:-1]))) if fd.size else None)
    return rep


def check_dissipation_R_relation(d, c_tol=C_DISR):
    """I - W^2 <= K dR^2/dt <= 3I + W^2."""
    K, W2 = d.K, d.W ** 2
    tol = c_tol * d.h * K ** 2 * max(float(d.I.max()), W2)
    kdr = K * d.dR2dt
    m = np.minimum(kdr - (d.I - W2), 3 * d.I + W2 - kdr)
    kfd = K * 2 * d.R[1:-1] * _centered(d.R, d.times)
    mfd = np.minimum(kfd - (d.I[1:-1] - W2), 3 * d.I[1:-1] + W2 - kfd)
    m[1:-1] = np.minimum(m[1:-1], mfd)
    return InequalityReport("dissipation_R_relation", d.times, m, tol,
                            extra={"fd_min": float(mfd.min()) if mfd.size else None})


def check_phi_dot(d, c_tol=C_PHI, r_min=R_MIN_PHASE):
    """|phi'| <= (1/R) sqrt(K dR^2/dt + W^2) where R >= r_min."""
    sel = d.R >= r_min
    if not np.any(sel):
        return InequalityReport.skip("phi_dot", f"R < {r_min} throughout")
    R = d.R
    rhs = np.sqrt(np.clip(d.K * d.dR2dt + d.W ** 2, 0.0, None)) / np.maximum(R, 1e-300)
    lhs = np.abs(d.Rphidot_formula) / np.maximum(R, 1e-300)
    m = rhs - lhs
    fd = np.abs(_centered(d.phi, d.times))
    m[1:-1] = np.minimum(m[1:-1], rhs[1:-1] - fd)
    tol = c_tol * d.h * d.K * max(1.0, float(np.max(rhs[sel])))
    rep = InequalityReport("phi_dot", d.times[sel], m[sel], tol)
    rep.hypotheses["skipped_points"] = int((~sel).sum())
    return rep


def check_mass_lateral(d, c_tol=C_LATERAL, r_min=R_MIN_PHASE):
    """rho(T minus (L+ u L-)) <= dR^2/dt / (K R^2 cos^2 a) + W^2 / (K^2 R^2 cos^2 a)."""
    sel = d.R >= r_min
    if not np.any(sel):
        return InequalityReport.skip("mass_lateral", f"R < {r_min} throughout")
    c2 = np.cos(d.alpha) ** 2
    R2 = np.maximum(d.R ** 2, 1e-300)
    rhs = d.dR2dt / (d.K * R2 * c2) + d.W ** 2 / (d.K ** 2 * R2 * c2)
    m = rhs - d.mass_lateral_out
    tol = c_tol * d.h
    return InequalityReport("mass_lateral", d.times[sel], m[sel], tol,
                            hypotheses={"skipped_points": int((~sel).sum())})


def check_instability(d, c_tol=C_INST, r_min=1e-3):
    """d/dt f^2(chi-) <= -K R sin(a) f^2(chi-) + 4K f^2(T) [W/K + sqrt(2R'/(KR) + W^2/(K^2R^2)) - R cos a]^+."""
    K, W, R, a = d.K, d.W, d.R, d.alpha
    lhs = _centered(d.f2_chi_minus, d.times)
    Ri = np.maximum(R[1:-1], 1e-300)
    root = np.sqrt(np.clip(2 * d.Rdot_formula[1:-1] / (K * Ri) + W ** 2 / (K ** 2 * Ri ** 2), 0.0, None))
    bracket = np.clip(W / K + root - Ri * np.cos(a), 0.0, None)
    rhs = -K * Ri * np.sin(a) * d.f2_chi_minus[1:-1] + 4 * K * d.f2_total[1:-1] * bracket
    sel = R[1:-1] >= r_min
    tol = c_tol * d.h * K * float(d.f2_total.max())
    rep = InequalityReport("instability", d.times[1:-1][sel], (rhs - lhs)[sel], tol)
    rep.extra["bracket_zero_fraction"] = float(np.mean(bracket[sel] == 0.0)) if sel.any() else None
    return rep


def check_global_l2(d, c_tol=C_GL2):
    """d/dt f^2(T) <= K R f^2(T)."""
    lhs = _centered(d.f2_total, d.times)
    rhs = d.K * d.R[1:-1] * d.f2_total[1:-1]
    tol = c_tol * d.h * d.K * float(d.f2_total.max())
    return InequalityReport("global_l2", d.times[1:-1], rhs - lhs, tol)


def check_convexity_regime(d, beta=None, c_T0=20.0, tol=None):
    """First time after which R >= 3/5 and rho(outside L+_beta) <= exp(-K (t - T0)/20) + tol.

    Returns (report, T0_meas). The report carries the bound
    c_T0 / (K R0^2) log(1 + W^(1/2) ||f0||_2 + 1/R0) in ``extra``.
    """
    out = d.mass_outside_beta
    if beta is not None and beta != d.beta:
        raise ValueError("diagnostics were computed with a different beta")
    tol = C_CONVEX * d.dtheta if tol is None else tol
    t, R, K = d.times, d.R, d.K
    n = t.size
    ok_R = R >= 0.6
    # suffix: R stays above 3/5 from index i on
    suffix_ok = np.flip(np.cumprod(np.flip(ok_R))).astype(bool)
    T0_idx = None
    for i in np.nonzero(suffix_ok)[0]:
        if np.all(out[i:] <= np.exp(-K * (t[i:] - t[i]) / 20.0) + tol):
            T0_idx = int(i)
            break
    if T0_idx is None:
        raise NeverEntered("convexity regime not entered within the run")
    T0 = float(t[T0_idx])
    margins = np.exp(-K * (t[T0_idx:] - T0) / 20.0) - out[T0_idx:]
    norm0 = float(np.sqrt(d.f2_total[0]))
    R0 = d.R0
    bound = c_T0 / (K * R0 ** 2) * np.log(1.0 + np.sqrt(d.W) * norm0 + 1.0 / R0)
    rep = InequalityReport("convexity_regime", t[T0_idx:], margins, tol)
    rep.extra.update(T0_meas=T0, T0_bound=float(bound), c_T0=c_T0, within_bound=bool(T0 <= bound))
    return rep, T0


# ---------------------------------------------------------------- order-parameter bounds

def check_entropy_production_gain(d, t0, lam, R0=None, C=1.0, alpha=ALPHA):
    """Find d <= log(10)/(3 K R0) with R^2(t0 + d) - R^2(t0) >= lam^4 R0^3 / 40."""
    R0 = d.R0 if R0 is None else R0
    K = d.K
    i0 = int(np.argmin(np.abs(d.times - t0)))
    Rt0, Rd0 = d.R[i0], d.Rdot_formula[i0]
    thr = K / 4 * np.cos(alpha) ** 2 * lam ** 3 * R0 ** 3
    hyp = {"R_window": bool(np.sqrt(2) * R0 >= Rt0 > lam * R0), "Rdot_large": bool(Rd0 >= thr),
           "gain_cali": bool(d.W / K <= C * lam ** 2 * R0 ** 2), "C": C}
    if not (hyp["R_window"] and hyp["Rdot_large"]):
        raise HypothesisNotMet(f"gain hypotheses fail at t0={d.times[i0]}: {hyp}")
    dmax = np.log(10.0) / (3 * K * R0)
    w = (d.times > d.times[i0]) & (d.times <= d.times[i0] + dmax + 1e-12)
    if not np.any(w):
        raise HypothesisNotMet("no snapshot inside the gain window")
    target = lam ** 4 * R0 ** 3 / 40.0
    gains = d.R[w] ** 2 - Rt0 ** 2
    k = int(np.argmax(gains >= target)) if np.any(gains >= target) else int(np.argmax(gains))
    rep = InequalityReport("entropy_production_gain", [d.times[i0]], [gains.max() - target],
                           2 * d.h * R0 ** 2, hypotheses=hyp)
    rep.extra.update(d_found=float(d.times[w][k] - d.times[i0]), d_max=float(dmax), target=target)
    return rep


def check_R_lower_bound(d, lam, R0=None, C=1.0):
    R0 = d.R0 if R0 is None else R0
    if not (0 < 1 - lam < R0 / 120):
        raise HypothesisNotMet(f"1 - lambda = {1 - lam:.3g} not in (0, R0/120)")
    hyp = {"gain_vs_loss_cali": bool(d.W / d.K < C * lam ** 2 * (1 - lam) * R0 ** 2), "C": C}
    return InequalityReport("R_lower_bound", d.times, d.R - lam * R0, d.dtheta, hypotheses=hyp)


def check_decrease_rate(d, lam, R0=None, C=1.0, alpha=ALPHA):
    """Cubic lower bound on dR^2/dt over maximal intervals of small R'."""
    R0 = d.R0 if R0 is None else R0
    if not (2.0 / 3.0 < lam < 1.0):
        raise HypothesisNotMet("lambda must lie in (2/3, 1)")
    K = d.K
    c2g = (1 - lam) * R0 / 5.0
    g = np.arccos(np.sqrt(c2g))
    thr = K * np.cos(alpha) ** 2 * lam ** 3 * R0 ** 3 / 4.0
    small = d.Rdot_formula <= thr
    hyp = {"deccon": bool(d.W / K <= C * (1 - lam) * lam ** 2 * R0 ** 2), "C": C,
           "cos2_gamma": c2g, "intervals": []}
    times, margins = [], []
    i, n = 0, small.size
    while i < n:
        if not small[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and small[j + 1]:
            j += 1
        start = [k for k in range(i, j + 1) if d.Rdot_formula[k] <= 0 and d.R[k] >= R0]
        if start:
            s = start[0]
            R = d.R[s:j + 1]
            rhs = K * c2g / (2 * np.sin(g)) * (-R ** 3 + (lam * R0 + 0.6 * (1 - lam) * R0) * R ** 2
                                              - 0.6 * (1 - lam) * lam ** 2 * R0 ** 3)
            times.append(d.times[s:j + 1])
            margins.append(d.dR2dt[s:j + 1] - rhs)
            hyp["intervals"].append([float(d.times[s]), float(d.times[j])])
        i = j + 1
    if not times:
        return InequalityReport("decrease_rate", [], [], 0.0, hypotheses=hyp)
    tol = C_DISR * d.h * K
    return InequalityReport("decrease_rate", np.concatenate(times), np.concatenate(margins), tol,
                            hypotheses=hyp)


# ---------------------------------------------------------------- decay

def fit_decay_rate(t, series, t_start, t_end, floor=None):
    """Slope of log(series) on [t_start, t_end], excluding points within 2x the floor.

    Returns (rate, r2, floor). ``floor`` defaults to the last value of the series.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(series, dtype=float)
    floor = float(y[-1]) if floor is None else float(floor)
    sel = (t >= t_start) & (t <= t_end) & (y > 2.0 * floor) & (y > 0)
    if sel.sum() < 3:
        raise WindowBelowFloor("fewer than three points above the floor in the window")
    x, ly = t[sel], np.log(y[sel])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(-coef[0]), r2, floor


def check_transport_dissipation(traj, d, n_pairs=20, seed=0, c_tol=C_TRANSPORT):
    """W2g(f_t, f_s) <= int_t^s I^(1/2) on random snapshot pairs."""
    rng = np.random.default_rng(seed)
    n = len(traj.snapshots)
    sq = np.sqrt(np.clip(d.I, 0.0, None))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (sq[1:] + sq[:-1]) * np.diff(d.times))])
    pairs = []
    while len(pairs) < n_pairs:
        i, j = sorted(rng.integers(0, n, size=2))
        if i < j:
            pairs.append((int(i), int(j)))
    margins, times = [], []
    for i, j in pairs:
        w = fibered_w2(traj.snapshots[i], traj.snapshots[j])
        margins.append(cum[j] - cum[i] - w)
        times.append(d.times[i])
    tol = c_tol * d.dtheta
    rep = InequalityReport("transport_dissipation", times, margins, tol)
    rep.extra["pairs"] = pairs
    return rep


def rotation_distance(eqA, eqB, c):
    d = circle_dist(eqA.atoms, eqB.atoms + c)
    return float(np.sqrt(np.dot(eqA.weights, d * d)))


def check_uniqueness(eqA, eqB, tol=1e-8, n_scan=720):
    """min over c of W2g(eqA, eqB rotated by c)."""
    if eqA.support_diameter >= np.pi / 2 or eqB.support_diameter >= np.pi / 2:
        raise HypothesisNotMet("equilibrium support diameter must be < pi/2")
    if not (np.array_equal(eqA.nodes, eqB.nodes) and np.array_equal(eqA.weights, eqB.weights)):
        raise HypothesisNotMet("equilibria have different frequency marginals")
    cs = np.linspace(0.0, TWO_PI, n_scan, endpoint=False)
    vals = np.array([rotation_distance(eqA, eqB, c) for c in cs])
    k = int(np.argmin(vals))
    step = TWO_PI / n_scan
    lo, hi = cs[k] - step, cs[k] + step
    gr = (np.sqrt(5) - 1) / 2
    a, b = hi - gr * (hi - lo), lo + gr * (hi - lo)
    fa, fb = rotation_distance(eqA, eqB, a), rotation_distance(eqA, eqB, b)
    while hi - lo > 1e-10:
        if fa < fb:
            hi, b, fb = b, a, fa
            a = hi - gr * (hi - lo)
            fa = rotation_distance(eqA, eqB, a)
        else:
            lo, a, fa = a, b, fb
            b = lo + gr * (hi - lo)
            fb = rotation_distance(eqA, eqB, b)
    c = 0.5 * (lo + hi)
    # the squared objective is quadratic near the optimum: one exact step
    for _ in range(3):
        c = c + float(np.dot(eqA.weights, signed_diff(eqA.atoms, eqB.atoms + c)))
    c = float(np.mod(c, TWO_PI))
    dist = rotation_distance(eqA, eqB, c)
    rep = InequalityReport("uniqueness", [0.0], [tol - dist], 0.0)
    rep.extra.update(shift=c, distance=dist)
    return rep


# ---------------------------------------------------------------- dyadic subdivision

Q_ATTRACTOR = 1.0 / 3600.0
C_T0 = 20.0
C_GSUM = 200.0


def default_lambda(R0):
    return 1.0 - R0 / 240.0


@dataclass
class Interval:
    start: float
    end: float
    kind: str  # "G" or "B"
    level: int
    t_tilde: float = None  # end of the large-slope part of a G interval
    terminal: bool = False


@dataclass
class SubdivisionReport:
    lam: float
    Q: float
    K: float
    W: float
    R0: float
    r: np.ndarray  # r_0 .. r_{k*}, then the run end as r_{k*+1}
    levels: np.ndarray  # R_k
    k_star: int
    T_minus1: np.ndarray  # inf where never reached
    t0: float
    k0: int
    intervals: list
    g: np.ndarray
    b: np.ndarray
    mu: np.ndarray
    d: np.ndarray
    delta: np.ndarray
    D: np.ndarray
    f0_sq: float
    transient: str = "corrected"
    flags: dict = field(default_factory=dict)

    @property
    def transient_exponent(self):
        """Exponent of the transient factor at t0, for the chosen form."""
        if self.transient == "printed":
            return 4.0 * self.Q / self.R0
        return 4.0 / (self.Q * self.R0)

    def log_barrier(self, t):
        """log F_k(t) for t >= t0 (vectorized)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.full(t.shape, np.nan)
        sa = np.sin(ALPHA)
        logF = np.log(self.f0_sq) + self.transient_exponent
        start = self.t0
        for k in range(self.k0, self.k_star + 1):
            Rk, Dk = self.levels[k], self.D[k]
            end = self.r[k + 1] if k < self.k_star else np.inf
            a = start if k == self.k0 else self.r[k]
            sel = (t >= a) & (t < end) if k < self.k_star else (t >= a)
            s = t[sel] - a
            grow = 2 * self.K * Rk * np.minimum(s, Dk)
            decay = -self.K * Rk * sa / 2 * np.clip(s - Dk, 0.0, None)
            out[sel] = logF + grow + decay
            # value carried to the next level's start
            if k < self.k_star:
                sN = end - a
                logF = logF + 2 * self.K * Rk * min(sN, Dk) - self.K * Rk * sa / 2 * max(sN - Dk, 0.0)
        return out

    def log_Fk_bound(self, k):
        """Upper bound log(||f0||^2) + exponent + sum_{q=k0}^{k} 2 K R_q D_q."""
        s = sum(2 * self.K * self.levels[q] * self.D[q] for q in range(self.k0, k + 1))
        return np.log(self.f0_sq) + self.transient_exponent + s

    @property
    def B_constant(self):
        """B such that max F = ||f0||^2 exp(B/(K R0) log(1 + 1/R0)), from the run."""
        worst = max(self.log_Fk_bound(k) for k in range(self.k0, self.k_star + 1))
        return float(self.K * self.R0 * (worst - np.log(self.f0_sq)) / np.log1p(1.0 / self.R0))

    def g_bound(self, k):
        return 200.0 * (2.0 - self.lam ** 2) / self.levels[k] + 5.0

    def invariants(self):
        ks = range(self.k0, self.k_star + 1)
        return {"b_le_g_plus_1": all(self.b[k] <= self.g[k] + 1 for k in range(self.k_star + 1)),
                "g_bound": all(self.g[k] <= self.g_bound(k) for k in ks)}

    def G_length_sums(self):
        out = np.zeros(self.k_star + 1)
        for iv in self.intervals:
            if iv.kind == "G":
                out[iv.level] += iv.end - iv.start
        return out

    def check_G_lengths(self, multiple=C_GSUM):
        s = self.G_length_sums()
        ks = np.arange(self.k0, self.k_star + 1)
        rhs = multiple / (self.K * self.levels[ks] ** 2)
        return InequalityReport("G_interval_lengths", ks.astype(float), rhs - s[ks], 0.0,
                                hypotheses={"multiple": multiple})

    def check_t0(self, multiple=C_T0):
        bound = multiple / (self.K * self.R0 ** 2)
        rep = InequalityReport("t0_bound", [self.t0], [bound - self.t0], 0.0,
                               hypotheses={"multiple": multiple})
        rep.extra["t0"] = self.t0
        return rep

    def T0_candidate(self, alpha=ALPHA):
        """Lower expression for T0 using Q' = B/K from this run (log term clamped at 0)."""
        ks = self.k_star
        Rk = self.levels[ks]
        Qp = self.B_constant / self.K
        arg = 4 * np.sqrt(np.pi) * np.sqrt(self.W) * np.sqrt(self.f0_sq) / (Rk / 120.0)
        first = 4.0 / (self.K * Rk * np.sin(alpha)) * max(0.0, np.log(arg)) if arg > 0 else 0.0
        second = (Qp + 16.0) / (2 * self.K * self.R0) * np.log1p(1.0 / (40 * self.R0))
        return float(first + second + self.r[ks] + self.D[ks])

    def summary(self):
        return {"lambda": self.lam, "Q": self.Q, "r": self.r.tolist(), "R_levels": self.levels.tolist(),
                "k_star": self.k_star, "t0": self.t0, "k0": self.k0,
                "T_minus1": [None if not np.isfinite(x) else float(x) for x in self.T_minus1],
                "g": self.g.tolist(), "b": self.b.tolist(), "D": self.D.tolist(),
                "intervals": [[iv.start, iv.end, iv.kind, iv.level, iv.terminal] for iv in self.intervals],
                "invariants": self.invariants(), "transient": self.transient,
                "T0_candidate": self.T0_candidate(), "flags": self.flags}


def _first_time(t, y, start, thr, above, stop):
    """First s in [start, stop) with y(s) >= thr (above) or y(s) < thr, y linear between samples."""
    def ok(v):
        return v >= thr if above else v < thr

    y0 = float(np.interp(start, t, y))
    if ok(y0):
        return start
    i = int(np.searchsorted(t, start, side="right"))
    prev_t, prev_y = start, y0
    while i < t.size and t[i] < stop:
        if ok(y[i]):
            if y[i] == prev_y:
                return float(t[i])
            s = prev_t + (thr - prev_y) / (y[i] - prev_y) * (t[i] - prev_t)
            return float(min(max(s, prev_t), t[i]))
        prev_t, prev_y = t[i], y[i]
        i += 1
    if np.isfinite(stop) and stop <= t[-1]:
        ys = float(np.interp(stop, t, y))
        if ok(ys) and ys != prev_y:
            s = prev_t + (thr - prev_y) / (ys - prev_y) * (stop - prev_t)
            return float(min(max(s, prev_t), stop))
    return None


def _dyadic_times(t, R, R0):
    """First crossings of R^2 >= 2 R_k^2, log-linear interpolation of R^2."""
    r = [float(t[0])]
    levels = [R0]
    lr2 = np.log(np.maximum(R ** 2, 1e-300))
    while True:
        target = 2.0 * levels[-1] ** 2
        if target > 1.0 + 1e-12:
            break
        i0 = int(np.searchsorted(t, r[-1], side="left"))
        hit = np.nonzero(R[i0:] ** 2 >= target)[0]
        if hit.size == 0:
            break
        i = i0 + int(hit[0])
        if i == 0:
            s = float(t[0])
        else:
            lt = np.log(target)
            denom = lr2[i] - lr2[i - 1]
            s = float(t[i]) if denom == 0 else float(t[i - 1] + (lt - lr2[i - 1]) / denom * (t[i] - t[i - 1]))
            s = max(s, r[-1])
        r.append(s)
        levels.append(np.sqrt(2.0) * levels[-1])
    return np.array(r), np.array(levels)


def subdivision_from_series(t, R, Rdot, K, W, f0_sq=1.0, lam=None, Q=Q_ATTRACTOR, C=1.0,
                            alpha=ALPHA, transient="corrected"):
    """Dyadic levels, attractor times and the good/bad partition from scalar series."""
    t = np.asarray(t, dtype=float)
    R = np.asarray(R, dtype=float)
    Rdot = np.asarray(Rdot, dtype=float)
    from .errors import DegenerateTrajectory

    if np.any(R > 1.0 + 1e-9):
        raise DegenerateTrajectory(f"R exceeds 1 (max {R.max()})")
    R0 = float(R[0])
    if R0 <= 0:
        raise DegenerateTrajectory("R0 must be positive")
    lam = default_lambda(R0) if lam is None else lam
    c2a = np.cos(alpha) ** 2
    # the default lambda sits on this boundary
    if not (1.0 - lam <= c2a / 180.0 * R0 * (1 + 1e-9)):
        raise HypothesisNotMet(f"1 - lambda = {1 - lam:.3g} exceeds cos^2(alpha) R0 / 180")
    flags = {"W_over_K_le_C_R0_cubed": bool(W / K <= C * R0 ** 3), "C": C}
    r, levels = _dyadic_times(t, R, R0)
    k_star = r.size - 1
    t_end = float(t[-1])
    r_full = np.append(r, t_end if t_end > r[-1] else r[-1])
    Tm = np.full(k_star + 1, np.inf)
    for k in range(k_star + 1):
        s = _first_time(t, -Rdot, r[k], -K * Q * levels[k] ** 3, True, np.inf)
        if s is not None:
            Tm[k] = s
    if not np.any(np.isfinite(Tm)):
        from .errors import DegenerateTrajectory as _D
        raise _D("R' never drops below the attractor threshold")
    t0 = float(Tm.min())
    k0 = int(np.max(np.nonzero(r <= t0)[0]))
    mu = c2a / 4.0 * lam ** 3 * levels ** 3
    dk = np.log(10.0) / (3 * K * levels)
    delta = np.log(1.0 / levels) / (K * levels)
    intervals = []
    tl = t0
    force_G = False
    while tl < t_end - 1e-12:
        k = int(np.max(np.nonzero(r <= tl + 1e-15)[0]))
        stop = r_full[k + 1] if k < k_star else t_end
        thr = K * mu[k]
        val = float(np.interp(tl, t, Rdot))
        if val < thr and not force_G:
            s = _first_time(t, Rdot, tl, thr, True, stop)
            end = stop if s is None or s <= tl else s
            intervals.append(Interval(tl, end, "B", k))
            force_G = s is not None and s > tl and end < stop
        else:
            s = _first_time(t, Rdot, tl, thr, False, stop)
            tt = stop if s is None else max(s, tl)
            end = tt + dk[k] if tt + dk[k] <= stop else stop
            intervals.append(Interval(tl, end, "G", k, t_tilde=tt))
            force_G = False
        tl = intervals[-1].end
        if k < k_star and tl >= stop:
            tl = stop
    g = np.zeros(k_star + 1, dtype=int)
    b = np.zeros(k_star + 1, dtype=int)
    Gsum = np.zeros(k_star + 1)
    for iv in intervals:
        if iv.kind == "G":
            g[iv.level] += 1
            Gsum[iv.level] += iv.t_tilde - iv.start
        else:
            b[iv.level] += 1
    for k in range(k_star + 1):
        mine = [iv for iv in intervals if iv.level == k]
        if mine:
            mine[-1].terminal = True
    D = np.maximum(b, g) * (delta + dk) + Gsum
    flags["single_interval_levels"] = [int(k) for k in range(k0, k_star + 1)
                                       if sum(iv.level == k for iv in intervals) == 1]
    return SubdivisionReport(lam, Q, K, W, R0, r_full, levels, k_star, Tm, t0, k0, intervals,
                             g, b, mu, dk, delta, D, float(f0_sq), transient, flags)


def subdivision_report(d, lam=None, Q=Q_ATTRACTOR, C=1.0, transient="corrected"):
    """Subdivision of a run from its diagnostics; thresholds use the smoothed R'."""
    return subdivision_from_series(d.times, d.R, d.Rdot_smooth, d.K, d.W, d.f2_total[0], lam, Q, C,
                                   d.alpha, transient)


def check_transient_l2(d, rep):
    """||f_{t0}||^2 <= ||f0||^2 exp(transient exponent), in the report's form."""
    f2_t0 = float(np.interp(rep.t0, d.times, d.f2_total))
    lhs = np.log(f2_t0)
    rhs = np.log(rep.f0_sq) + rep.transient_exponent
    out = InequalityReport(f"transient_l2_{rep.transient}", [rep.t0], [rhs - lhs], 0.0)
    out.extra.update(f2_t0=f2_t0, f2_0=rep.f0_sq, exponent=rep.transient_exponent)
    return out


def check_uniform_Fk(d, rep):
    """max F_k <= ||f0||^2 exp(B/(K R0) log(1 + 1/R0)) and F_k <= its product bound."""
    ts = d.times[d.times >= rep.t0]
    logF = rep.log_barrier(ts)
    levels = np.array([int(np.max(np.nonzero(rep.r[:rep.k_star + 1] <= s + 1e-15)[0])) for s in ts])
    levels = np.maximum(levels, rep.k0)
    prod = np.array([rep.log_Fk_bound(k) for k in levels])
    unif = np.log(rep.f0_sq) + rep.B_constant / (rep.K * rep.R0) * np.log1p(1.0 / rep.R0)
    m = np.minimum(prod - logF, unif - logF)
    out = InequalityReport("uniform_Fk", ts, m, 1e-9)
    out.extra["B"] = rep.B_constant
    return out


def check_L2_barrier(traj, d, rep, eps=None, tol=None, field=None):
    """f^2 outside the eps-neighborhood of the transported lateral arc stays below F_k.

    The arc is L+_gamma(t0) with cos^2(gamma) = R_{k0}/30, carried on every fiber
    by the characteristic flow. Comparison is done in log scale.
    """
    from .flow import EvolvingSet, FlowField, arc_neighborhood, evolve_set
    from .circle import cell_overlap

    eps = d.R0 / 15.0 if eps is None else eps
    field = FlowField.from_trajectory(traj) if field is None else field
    gamma = float(np.arccos(np.sqrt(rep.levels[rep.k0] / 30.0)))
    i0 = int(np.searchsorted(d.times, rep.t0 - 1e-12))
    phi0 = float(np.interp(rep.t0, d.times, d.phi))
    aset = EvolvingSet.product(Arc(phi0, 0.5 * np.pi - gamma), traj.grid.nodes, rep.t0)
    ts, lhs = [], []
    cur = aset
    for i in range(i0, len(traj.snapshots)):
        s = float(d.times[i])
        cur = evolve_set(field, cur, max(s, cur.birth))
        nb = arc_neighborhood(cur, eps)
        st = traj.snapshots[i]
        arcs = nb.arcs[0]
        inside = cell_overlap(arcs[0], st.n_theta) if arcs else np.zeros(st.n_theta)
        lhs.append(weighted_square_norm(st, 1.0 - np.clip(inside, 0.0, 1.0)))
        ts.append(s)
    ts, lhs = np.array(ts), np.array(lhs)
    logF = rep.log_barrier(ts)
    tol = 1e-9 if tol is None else tol
    with np.errstate(divide="ignore"):
        m = logF - np.log(np.maximum(lhs, 1e-300))
    out = InequalityReport("L2_barrier", ts, m, tol,
                           hypotheses={"gamma": gamma, "eps": eps, "transient": rep.transient})
    out.extra.update(f2_outside=lhs.tolist(), log_barrier=logF.tolist())
    return out
