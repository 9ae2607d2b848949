"""Core model: parameters, ensembles, order parameters, potential and equilibria.

Phases live on the circle [0, 2pi). The potential is evaluated on whatever
phases are passed in, so callers that need a continuous-in-time energy must
pass lifted (unwrapped) phases.
"""
from dataclasses import dataclass, field

import numpy as np

from .circle import TWO_PI, wrap
from .errors import NoPhaseLockedEquilibrium

R_PHASE_EPS = 1e-12
CENTERING_TOL_PARTICLES = 1e-12
CENTERING_TOL_GRID = 1e-10


@dataclass(frozen=True)
class ModelParams:
    K: float
    W: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.K) or self.K <= 0:
            raise ValueError(f"K must be > 0, got {self.K}")
        if not np.isfinite(self.W) or self.W < 0:
            raise ValueError(f"W must be >= 0, got {self.W}")

    @property
    def ratio(self):
        """W/K, the quantity appearing in the smallness hypotheses."""
        return self.W / self.K


@dataclass(frozen=True)
class OrderParameterPair:
    R: float
    phi: float
    defined: bool

    @property
    def complex(self):
        return self.R * np.exp(1j * self.phi)


def _order_from_complex(z):
    R = float(min(abs(z), 1.0))
    if R < R_PHASE_EPS:
        return OrderParameterPair(R, 0.0, False)
    return OrderParameterPair(R, wrap(float(np.angle(z))), True)


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Phases and natural frequencies of N oscillators.

    Frequencies must be centered. Sampled ensembles whose empirical mean is
    not exactly zero are built with ``check_centering=False`` explicitly.
    """

    phases: np.ndarray
    freqs: np.ndarray
    check_centering: bool = field(default=True, repr=False)

    def __post_init__(self):
        th = wrap(np.atleast_1d(np.asarray(self.phases, dtype=float)))
        om = np.atleast_1d(np.asarray(self.freqs, dtype=float)).copy()
        if th.ndim != 1 or th.shape != om.shape or th.size < 1:
            raise ValueError("phases and freqs must be 1-d arrays of equal length N >= 1")
        if self.check_centering:
            scale = max(1.0, float(np.max(np.abs(om))))
            if abs(om.mean()) > CENTERING_TOL_PARTICLES * scale:
                raise ValueError(f"frequencies are not centered (mean {om.mean():.3e})")
        th.flags.writeable = False
        om.flags.writeable = False
        object.__setattr__(self, "phases", th)
        object.__setattr__(self, "freqs", om)

    @property
    def N(self):
        return self.phases.size

    def within_support(self, W):
        return bool(np.max(np.abs(self.freqs)) <= W + 1e-15)

    def rotated(self, c):
        return ParticleEnsemble(self.phases + c, self.freqs, self.check_centering)


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Quadrature nodes and masses for the frequency marginal g.

    ``dw`` is the width of the omega cell attached to each node; densities
    needed by the square-norm functionals are ``weights / dw``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    dw: float = 1.0

    def __post_init__(self):
        nodes = np.atleast_1d(np.asarray(self.nodes, dtype=float)).copy()
        w = np.atleast_1d(np.asarray(self.weights, dtype=float)).copy()
        if nodes.shape != w.shape or nodes.ndim != 1 or nodes.size < 1:
            raise ValueError("nodes and weights must be 1-d arrays of equal length")
        if nodes.size > 1 and np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 (got {w.sum():.15g})")
        if abs(np.dot(w, nodes)) > CENTERING_TOL_GRID:
            raise ValueError(f"frequency grid is not centered (mean {np.dot(w, nodes):.3e})")
        if self.dw <= 0:
            raise ValueError("dw must be > 0")
        nodes.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_density(cls, W, n, density=None):
        """Midpoint grid on [-W, W] with ``n`` cells, weights g(w_j) dw renormalized.

        ``density`` defaults to the uniform law. W = 0 gives a single node at 0.
        The density should be even so that the grid is centered.
        """
        if W == 0:
            return cls(np.zeros(1), np.ones(1), 1.0)
        dw = 2.0 * W / n
        nodes = -W + (np.arange(n) + 0.5) * dw
        # symmetrize explicitly: the mirrored half of the nodes gets identical values
        nodes = 0.5 * (nodes - nodes[::-1])
        g = np.ones(n) if density is None else np.asarray(density(nodes), dtype=float)
        g = 0.5 * (g + g[::-1])
        w = g * dw
        w = w / w.sum()
        return cls(nodes, w, dw)

    @classmethod
    def from_atoms(cls, nodes, weights, dw=1.0):
        w = np.asarray(weights, dtype=float)
        return cls(nodes, w / w.sum(), dw)

    @property
    def n(self):
        return self.nodes.size

    @property
    def density(self):
        return self.weights / self.dw

    @property
    def W(self):
        return float(np.max(np.abs(self.nodes)))

    def same_as(self, other):
        return (
            self.nodes.shape == other.nodes.shape
            and np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.weights, other.weights)
            and self.dw == other.dw
        )


@dataclass(frozen=True, eq=False)
class EquilibriumState:
    """Phase-locked stationary state with no antipodal mass."""

    R_inf: float
    phi_inf: float
    nodes: np.ndarray
    weights: np.ndarray
    K: float
    residual: float

    @property
    def atoms(self):
        """Atom location for each frequency node."""
        return wrap(self.phi_inf + np.arcsin(np.clip(self.nodes / (self.K * self.R_inf), -1, 1)))

    def rotated(self, c):
        return EquilibriumState(self.R_inf, wrap(self.phi_inf + c), self.nodes,
                                self.weights, self.K, self.residual)

    @property
    def support_diameter(self):
        a = np.arcsin(np.clip(self.nodes / (self.K * self.R_inf), -1, 1))
        return float(a.max() - a.min())


# ---------------------------------------------------------------- order parameters

def order_parameter_particles(ensemble):
    return _order_from_complex(np.mean(np.exp(1j * ensemble.phases)))


def order_parameter_phases(phases):
    return _order_from_complex(np.mean(np.exp(1j * np.asarray(phases))))


# ---------------------------------------------------------------- potential

def potential_energy(ensemble, params, phases=None):
    """V = -(1/N) sum w_j theta_j + (K/2)(1 - r^2).

    ``phases`` overrides the ensemble phases, typically with a lifted copy.
    """
    th = ensemble.phases if phases is None else np.asarray(phases, dtype=float)
    r2 = abs(np.mean(np.exp(1j * th))) ** 2
    return float(-np.mean(ensemble.freqs * th) + 0.5 * params.K * (1.0 - r2))


def potential_energy_pairwise(ensemble, params, phases=None):
    """Same energy from the pairwise cosine double sum."""
    th = ensemble.phases if phases is None else np.asarray(phases, dtype=float)
    N = th.size
    pair = np.sum(1.0 - np.cos(th[None, :] - th[:, None]))
    return float(-np.mean(ensemble.freqs * th) + params.K / (2.0 * N * N) * pair)


def _field(phases, freqs, K):
    z = np.mean(np.exp(1j * phases))
    r, phi = abs(z), np.angle(z)
    return freqs - K * r * np.sin(phases - phi), r, phi


def gradient_slope(ensemble, params):
    """|grad V|_N^2 = (1/N) sum (w_j - K r sin(theta_j - phi))^2."""
    v, _, _ = _field(ensemble.phases, ensemble.freqs, params.K)
    return float(np.mean(v * v))


def hessian_quadratic_form(ensemble, v, params):
    """<D^2 V v, v>_N = (K/N) sum r cos(theta_j - phi) v_j^2 - K |(1/N) sum v_j e^{i theta_j}|^2."""
    v = np.asarray(v, dtype=float)
    th = ensemble.phases
    z = np.mean(np.exp(1j * th))
    r, phi = abs(z), np.angle(z)
    diag = params.K * np.mean(r * np.cos(th - phi) * v * v)
    return float(diag - params.K * abs(np.mean(v * np.exp(1j * th))) ** 2)


# ---------------------------------------------------------------- equilibria

def _self_consistency(r, nodes, weights, K):
    x = np.clip(nodes / (K * r), -1.0, 1.0)
    return r - float(np.dot(weights, np.sqrt(1.0 - x * x)))


def _as_nodes_weights(freqs):
    if isinstance(freqs, FrequencyGrid):
        return freqs.nodes, freqs.weights
    if isinstance(freqs, ParticleEnsemble):
        om = freqs.freqs
        return om, np.full(om.size, 1.0 / om.size)
    om = np.asarray(freqs, dtype=float)
    return om, np.full(om.size, 1.0 / om.size)


def stable_equilibrium(freqs, params, phi_target=0.0, n_scan=4000, n_iter=200):
    """Largest root R_inf of r = sum w_j sqrt(1 - (w_j/(K r))^2) and its atoms.

    The root is bracketed by scanning (max|w|/K, 1] from the right, then
    refined by bisection.
    """
    nodes, weights = _as_nodes_weights(freqs)
    K = params.K
    r_lo = float(np.max(np.abs(nodes))) / K
    if r_lo > 1.0:
        raise NoPhaseLockedEquilibrium(f"max|omega|/K = {r_lo:.4g} > 1")

    def F(r):
        return _self_consistency(r, nodes, weights, K)

    if F(1.0) == 0.0:
        root = 1.0
    else:
        grid = np.linspace(1.0, max(r_lo, 1e-300), n_scan)
        vals = np.array([F(r) for r in grid])
        # F(1) >= 0; walk left until F turns negative
        neg = np.nonzero(vals <= 0.0)[0]
        if neg.size == 0:
            raise NoPhaseLockedEquilibrium("self-consistency map has no root")
        k = neg[0]
        lo, hi = grid[k], grid[k - 1]
        if vals[k] == 0.0:
            lo = hi = grid[k]
        for _ in range(n_iter):
            if hi - lo <= 0:
                break
            mid = 0.5 * (lo + hi)
            if F(mid) <= 0.0:
                lo = mid
            else:
                hi = mid
        root = hi if abs(F(hi)) <= abs(F(lo)) else lo
    residual = abs(F(root))
    return EquilibriumState(float(root), wrap(float(phi_target)), np.array(nodes, dtype=float),
                            np.array(weights, dtype=float), K, residual)


def equilibrium_ensemble(eq):
    """Particle configuration sitting exactly at the equilibrium atoms."""
    return ParticleEnsemble(eq.atoms, eq.nodes)
