"""N-oscillator Kuramoto system: right-hand side, RK4 integration, gradient-flow check."""
from dataclasses import dataclass

import numpy as np

from .circle import wrap
from .errors import StepTooLarge
from .model import ParticleEnsemble, gradient_slope, potential_energy
from .reports import InequalityReport


def particle_rhs(ensemble, params):
    """theta_i' = w_i - K r sin(theta_i - phi)."""
    return _rhs(ensemble.phases, ensemble.freqs, params.K)[0]


def particle_rhs_direct(ensemble, params):
    """O(N^2) pairwise form, kept as a cross-check."""
    th = ensemble.phases
    s = np.sin(th[None, :] - th[:, None]).sum(axis=1)
    return ensemble.freqs + params.K / th.size * s


def _rhs(th, om, K):
    z = np.mean(np.exp(1j * th))
    r, phi = abs(z), np.angle(z)
    return om - K * r * np.sin(th - phi), r, phi


def _rhs_with_tracers(th, om, tr, tr_om, K):
    v, r, phi = _rhs(th, om, K)
    return v, tr_om - K * r * np.sin(tr - phi)


@dataclass
class ParticleTrajectory:
    """States of the particle system on a uniform time grid.

    ``lifted`` holds unwrapped phases; ``phases`` the canonical ones. Optional
    tracers are passive points advected by the same mean field.
    """

    params: object
    times: np.ndarray
    lifted: np.ndarray
    freqs: np.ndarray
    dt: float
    R: np.ndarray
    phi: np.ndarray
    tracers: np.ndarray = None
    tracer_freqs: np.ndarray = None

    @property
    def phases(self):
        return wrap(self.lifted)

    @property
    def states(self):
        return [ParticleEnsemble(p, self.freqs, check_centering=False) for p in self.phases]

    def state(self, i):
        return ParticleEnsemble(self.lifted[i], self.freqs, check_centering=False)


def integrate_particles(ensemble0, params, T_end, dt, tracers=None, tracer_freqs=None,
                        store_every=1):
    """Classical RK4 with fixed step. Tracers (if any) feel the field but do not create it."""
    if dt > 0.1 / params.K + 1e-15:
        raise StepTooLarge(f"dt={dt} exceeds 0.1/K={0.1 / params.K}")
    n_steps = int(round(T_end / dt))
    if abs(n_steps * dt - T_end) > 1e-9 * max(1.0, T_end):
        raise ValueError("T_end must be an integer multiple of dt")
    K = params.K
    om = ensemble0.freqs
    th = np.array(ensemble0.phases, dtype=float)
    has_tr = tracers is not None
    if has_tr:
        tr = np.array(tracers, dtype=float)
        tr_om = np.broadcast_to(np.asarray(tracer_freqs if tracer_freqs is not None else 0.0,
                                          dtype=float), tr.shape).copy()
    n_store = n_steps // store_every + 1
    L = np.empty((n_store, th.size))
    T = np.empty((n_store, tr.size)) if has_tr else None
    Rs = np.empty(n_store)
    phis = np.empty(n_store)
    times = np.empty(n_store)

    def record(k, n):
        z = np.mean(np.exp(1j * th))
        L[k] = th
        Rs[k] = abs(z)
        phis[k] = np.angle(z)
        times[k] = n * dt
        if has_tr:
            T[k] = tr

    record(0, 0)
    k = 1
    for n in range(1, n_steps + 1):
        if has_tr:
            k1, q1 = _rhs_with_tracers(th, om, tr, tr_om, K)
            k2, q2 = _rhs_with_tracers(th + 0.5 * dt * k1, om, tr + 0.5 * dt * q1, tr_om, K)
            k3, q3 = _rhs_with_tracers(th + 0.5 * dt * k2, om, tr + 0.5 * dt * q2, tr_om, K)
            k4, q4 = _rhs_with_tracers(th + dt * k3, om, tr + dt * q3, tr_om, K)
            tr = tr + dt / 6.0 * (q1 + 2 * q2 + 2 * q3 + q4)
        else:
            k1 = _rhs(th, om, K)[0]
            k2 = _rhs(th + 0.5 * dt * k1, om, K)[0]
            k3 = _rhs(th + 0.5 * dt * k2, om, K)[0]
            k4 = _rhs(th + dt * k3, om, K)[0]
        th = th + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if n % store_every == 0:
            record(k, n)
            k += 1
    return ParticleTrajectory(params, times, L, om.copy(), dt * store_every,
                              Rs, np.unwrap(phis), T,
                              tr_om if has_tr else None)


# C_fd scales the truncation term dt^2 * |V'''|; |V'''| <= (K + max|w|)^2 * max slope
# up to O(1) factors for this system.
C_FD = 10.0


def check_gradient_flow(traj, c_fd=C_FD):
    """Residual of dV/dt = -|grad V|^2 with centered differences of V on lifted phases."""
    if traj.times.size < 3:
        raise ValueError("need at least 3 states")
    params = traj.params
    ens = [traj.state(i) for i in range(traj.times.size)]
    V = np.array([potential_energy(e, params, phases=traj.lifted[i]) for i, e in enumerate(ens)])
    slope = np.array([gradient_slope(e, params) for e in ens])
    dt = traj.dt
    dV = (V[2:] - V[:-2]) / (2 * dt)
    resid = np.abs(dV + slope[1:-1])
    scale = (params.K + float(np.max(np.abs(traj.freqs)))) ** 2
    s_max = float(slope.max())
    v_max = float(np.max(np.abs(V))) + 1.0
    tol = c_fd * (scale * s_max * dt ** 2 + v_max * np.finfo(float).eps / dt)
    rep = InequalityReport("gradient_flow", traj.times[1:-1], -resid, tol)
    rep.extra.update(max_residual=float(resid.max()), max_slope=s_max, c_fd=c_fd,
                     monotone_violation=float(np.max(np.diff(V), initial=0.0)))
    return rep
