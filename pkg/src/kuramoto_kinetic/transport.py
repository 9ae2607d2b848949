"""Quadratic transport distances on the circle and on the phase-frequency cylinder.

``w2_circle`` works on the lift: for a real shift ``s`` it matches the
quantile q of the first measure with quantile q + s of the periodically
extended second one. For atomic measures the cost is piecewise linear and
convex in ``s``, so the optimum sits at a difference of cumulative masses;
we search those candidates with a discrete golden-section search and then
check the neighbours.
"""
import os
from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .circle import TWO_PI, circle_dist, wrap
from .errors import InstanceTooLarge, MarginalMismatch, MassMismatch
from .kinetic import KineticState
from .model import EquilibriumState, ParticleEnsemble
from .reports import InequalityReport

MASS_TOL = 1e-9
EXHAUSTIVE_LIMIT = 8
HUNGARIAN_LIMIT = 2000
NETWORK_LIMIT = 5000


@dataclass
class CircleMeasure:
    theta: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        th = wrap(np.atleast_1d(np.asarray(self.theta, dtype=float)))
        m = np.atleast_1d(np.asarray(self.mass, dtype=float))
        if th.shape != m.shape:
            raise ValueError("theta and mass must have equal length")
        if np.any(m < 0):
            raise ValueError("masses must be nonnegative")
        keep = m > 0
        self.theta, self.mass = th[keep], m[keep]

    @classmethod
    def uniform(cls, theta):
        theta = np.atleast_1d(theta)
        return cls(theta, np.full(theta.size, 1.0 / theta.size))

    @classmethod
    def from_density(cls, h, dtheta=None):
        """Cell-center atoms of a periodic grid density."""
        h = np.asarray(h, dtype=float)
        dtheta = TWO_PI / h.size if dtheta is None else dtheta
        return cls((np.arange(h.size) + 0.5) * dtheta, h * dtheta)

    @property
    def total(self):
        return float(self.mass.sum())


@dataclass
class ProductMeasure:
    theta: np.ndarray
    omega: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        self.theta = wrap(np.atleast_1d(np.asarray(self.theta, dtype=float)))
        self.omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        self.mass = np.atleast_1d(np.asarray(self.mass, dtype=float))
        if not (self.theta.shape == self.omega.shape == self.mass.shape):
            raise ValueError("theta, omega and mass must have equal length")

    @classmethod
    def from_state(cls, state, min_mass=0.0):
        """Quantize a kinetic state to one atom per (fiber, cell)."""
        m = state.masses()
        th = np.broadcast_to(state.theta[None, :], m.shape)
        om = np.broadcast_to(state.grid.nodes[:, None], m.shape)
        keep = m.ravel() > min_mass
        mass = m.ravel()[keep]
        return cls(th.ravel()[keep], om.ravel()[keep], mass / mass.sum())

    @classmethod
    def from_ensemble(cls, ens):
        return cls(ens.phases, ens.freqs, np.full(ens.N, 1.0 / ens.N))

    @classmethod
    def uniform(cls, theta, omega):
        theta = np.atleast_1d(theta)
        return cls(theta, omega, np.full(theta.size, 1.0 / theta.size))

    @property
    def n(self):
        return self.mass.size

    @property
    def is_uniform(self):
        return bool(np.all(self.mass == self.mass[0]))


@dataclass
class TransportResult:
    distance: float
    plan: list = None
    method: str = ""

    @property
    def cost(self):
        return self.distance ** 2


# ---------------------------------------------------------------- circle

def _as_circle(mu):
    if isinstance(mu, CircleMeasure):
        return mu
    return CircleMeasure.from_density(np.asarray(mu))


class _Lifted:
    """Sorted atoms with cumulative masses for quantile evaluation."""

    def __init__(self, mu):
        order = np.argsort(mu.theta, kind="stable")
        self.x = mu.theta[order]
        self.m = mu.mass[order]
        self.idx = order
        self.cum = np.concatenate([[0.0], np.cumsum(self.m)])
        self.cum[-1] = 1.0

    def locate(self, q):
        """Atom index (in sorted order) and lift offset for quantile q in R."""
        k = np.floor(q)
        frac = q - k
        j = np.searchsorted(self.cum, frac, side="right") - 1
        j = np.clip(j, 0, self.x.size - 1)
        return j, k


def _segments(U, V, s):
    """Breakpoints in q of the matching q -> q + s, and segment midpoints."""
    bv = np.mod(V.cum[:-1] - s, 1.0)
    b = np.unique(np.concatenate([U.cum, bv, [0.0, 1.0]]))
    b = b[(b >= 0.0) & (b <= 1.0)]
    lengths = np.diff(b)
    mids = 0.5 * (b[:-1] + b[1:])
    keep = lengths > 0
    return mids[keep], lengths[keep]


def _shift_cost(U, V, s):
    mids, lengths = _segments(U, V, s)
    iu, _ = U.locate(mids)
    iv, k = V.locate(mids + s)
    y = V.x[iv] + TWO_PI * k
    return float(np.sum(lengths * (U.x[iu] - y) ** 2))


def _candidate_shifts(U, V):
    d = (V.cum[:-1][None, :] - U.cum[:-1][:, None]).ravel()
    c = np.concatenate([d - 1.0, d, d + 1.0])
    c = c[(c >= -1.0) & (c <= 1.0)]
    return np.unique(c)


def _argmin_convex(cands, f, exhaustive_below=256):
    n = cands.size
    if n <= exhaustive_below:
        vals = np.array([f(c) for c in cands])
        i = int(np.argmin(vals))
        return cands[i], vals[i]
    cache = {}

    def F(i):
        if i not in cache:
            cache[i] = f(cands[i])
        return cache[i]

    lo, hi = 0, n - 1
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    while hi - lo > 6:
        a = hi - int(round(invphi * (hi - lo)))
        b = lo + int(round(invphi * (hi - lo)))
        if a >= b:
            b = a + 1
        if F(a) <= F(b):
            hi = b
        else:
            lo = a
    best = min(range(max(0, lo - 3), min(n, hi + 4)), key=F)
    return cands[best], F(best)


def _circle_plan(U, V, s):
    mids, lengths = _segments(U, V, s)
    iu, _ = U.locate(mids)
    iv, _ = V.locate(mids + s)
    plan = {}
    for a, b, ln in zip(U.idx[iu], V.idx[iv], lengths):
        plan[(int(a), int(b))] = plan.get((int(a), int(b)), 0.0) + float(ln)
    return [(a, b, m) for (a, b), m in plan.items()]


def w2_circle(mu, nu, with_plan=False):
    """Quadratic Wasserstein distance with geodesic cost on the circle."""
    mu, nu = _as_circle(mu), _as_circle(nu)
    if abs(mu.total - nu.total) > MASS_TOL:
        raise MassMismatch(f"total masses differ: {mu.total} vs {nu.total}")
    mu = CircleMeasure(mu.theta, mu.mass / mu.total)
    nu = CircleMeasure(nu.theta, nu.mass / nu.total)
    U, V = _Lifted(mu), _Lifted(nu)
    cands = _candidate_shifts(U, V)
    s, cost = _argmin_convex(cands, lambda c: _shift_cost(U, V, c))
    plan = _circle_plan(U, V, s) if with_plan else None
    return TransportResult(float(np.sqrt(max(cost, 0.0))), plan, "quantile")


def w2_circle_bruteforce(theta_a, theta_b):
    """Minimum over all matchings of two equal-size uniform atom sets."""
    a, b = np.asarray(theta_a), np.asarray(theta_b)
    best = np.inf
    for perm in permutations(range(b.size)):
        c = np.mean(circle_dist(a, b[list(perm)]) ** 2)
        best = min(best, c)
    return float(np.sqrt(best))


def plan_cost(plan, theta_a, theta_b):
    return float(sum(m * circle_dist(theta_a[i], theta_b[j]) ** 2 for i, j, m in plan))


# ---------------------------------------------------------------- fibered

def _second_moment_to_atoms(state, atoms):
    d = circle_dist(state.theta[None, :], atoms[:, None])
    return np.sum(d * d * state.h, axis=1) * state.dtheta


def fibered_w2_per_fiber(a, b):
    """Per-fiber squared circle distances."""
    if isinstance(b, EquilibriumState):
        if not (np.array_equal(b.nodes, a.grid.nodes) and np.array_equal(b.weights, a.grid.weights)):
            raise MarginalMismatch("equilibrium frequency nodes differ from the state's grid")
        return _second_moment_to_atoms(a, b.atoms)
    if not isinstance(b, KineticState) or not a.grid.same_as(b.grid):
        raise MarginalMismatch("fibered distance needs an identical frequency grid")
    if a.n_theta != b.n_theta:
        raise MarginalMismatch("theta grids differ")
    out = np.empty(a.grid.n)
    for j in range(a.grid.n):
        out[j] = w2_circle(CircleMeasure.from_density(a.h[j]),
                           CircleMeasure.from_density(b.h[j])).distance ** 2
    return out


def fibered_w2(a, b):
    per = fibered_w2_per_fiber(a, b)
    return float(np.sqrt(max(np.dot(a.grid.weights, per), 0.0)))


# ---------------------------------------------------------------- scaled

def _as_product(mu):
    if isinstance(mu, ProductMeasure):
        return mu
    if isinstance(mu, KineticState):
        return ProductMeasure.from_state(mu)
    if isinstance(mu, ParticleEnsemble):
        return ProductMeasure.from_ensemble(mu)
    raise TypeError(f"cannot interpret {type(mu).__name__} as a product measure")


def scaled_cost_matrix(mu, nu, K):
    d = circle_dist(mu.theta[:, None], nu.theta[None, :])
    dw = mu.omega[:, None] - nu.omega[None, :]
    return d * d + dw * dw / (K * K)


def _exhaustive(C):
    n = C.shape[0]
    best, arg = np.inf, None
    rows = np.arange(n)
    for perm in permutations(range(n)):
        c = C[rows, list(perm)].sum()
        if c < best:
            best, arg = c, perm
    return best / n, [(i, j, 1.0 / n) for i, j in enumerate(arg)]


def _hungarian(C):
    r, c = linear_sum_assignment(C)
    n = C.shape[0]
    return float(C[r, c].sum() / n), [(int(i), int(j), 1.0 / n) for i, j in zip(r, c)]


def _network_simplex(a, b, C):
    for k in ("PYTORCH", "TENSORFLOW", "JAX", "CUPY"):
        os.environ.setdefault(f"POT_BACKEND_DISABLE_{k}", "1")
    import ot

    G = ot.emd(a, b, C, numItermax=10_000_000)
    cost = float(np.sum(G * C))
    ii, jj = np.nonzero(G > 0)
    return cost, [(int(i), int(j), float(G[i, j])) for i, j in zip(ii, jj)]


def scaled_w2(mu, nu, params, method="auto", with_plan=False):
    """Transport with cost d(theta, theta')^2 + (w - w')^2 / K^2."""
    mu, nu = _as_product(mu), _as_product(nu)
    if abs(mu.mass.sum() - nu.mass.sum()) > MASS_TOL:
        raise MassMismatch(f"total masses differ: {mu.mass.sum()} vs {nu.mass.sum()}")
    C = scaled_cost_matrix(mu, nu, params.K)
    equal_uniform = mu.n == nu.n and mu.is_uniform and nu.is_uniform
    if method == "auto":
        if equal_uniform and mu.n <= EXHAUSTIVE_LIMIT:
            method = "exhaustive"
        elif equal_uniform and mu.n <= HUNGARIAN_LIMIT:
            method = "hungarian"
        else:
            method = "network_simplex"
    if method == "exhaustive":
        if not equal_uniform or mu.n > EXHAUSTIVE_LIMIT:
            raise InstanceTooLarge("exhaustive search needs equal-count uniform atoms, n <= 8")
        cost, plan = _exhaustive(C)
    elif method == "hungarian":
        if not equal_uniform or mu.n > HUNGARIAN_LIMIT:
            raise InstanceTooLarge("assignment needs equal-count uniform atoms, n <= 2000")
        cost, plan = _hungarian(C)
    elif method == "network_simplex":
        if mu.n + nu.n > NETWORK_LIMIT:
            raise InstanceTooLarge(f"support size {mu.n + nu.n} exceeds {NETWORK_LIMIT}")
        a = mu.mass / mu.mass.sum()
        b = nu.mass / nu.mass.sum()
        cost, plan = _network_simplex(a, b, C)
    else:
        raise ValueError(f"unknown method {method!r}")
    return TransportResult(float(np.sqrt(max(cost, 0.0))), plan if with_plan else None, method)


def verify_order(a, b, params, tol=1e-8):
    """Check scaled_w2(a, b) <= fibered_w2(a, b) on the quantized states."""
    if not a.grid.same_as(b.grid):
        raise MarginalMismatch("states must share the frequency grid")
    sw = scaled_w2(a, b, params).distance
    fw = fibered_w2(a, b)
    return InequalityReport("sw2_le_w2g", [a.t], [fw - sw], tol, extra={"sw2": sw, "w2g": fw})
