"""Phase arithmetic on the circle and arcs."""
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap(theta):
    """Canonical representative in [0, 2pi)."""
    out = np.mod(theta, TWO_PI)
    # np.mod(-1e-18, 2pi) rounds to 2pi
    if np.ndim(out) == 0:
        return 0.0 if out >= TWO_PI else float(out)
    out = np.asarray(out, dtype=float)
    out[out >= TWO_PI] = 0.0
    return out


def signed_diff(a, b):
    """a - b mapped to [-pi, pi)."""
    return np.mod(np.asarray(a) - np.asarray(b) + np.pi, TWO_PI) - np.pi


def circle_dist(a, b):
    """Geodesic distance in [0, pi]."""
    return np.abs(signed_diff(a, b))


@dataclass(frozen=True)
class Arc:
    """Closed arc {theta : d(theta, center) <= half_width}; half_width = pi is the circle."""

    center: float
    half_width: float

    def __post_init__(self):
        if not (0.0 <= self.half_width <= np.pi):
            raise ValueError(f"half_width must lie in [0, pi], got {self.half_width}")
        object.__setattr__(self, "center", wrap(float(self.center)))

    @classmethod
    def from_endpoints(cls, start, length):
        """Arc running counter-clockwise from ``start`` over ``length`` radians."""
        length = float(np.clip(length, 0.0, TWO_PI))
        return cls(start + 0.5 * length, 0.5 * length)

    @classmethod
    def full(cls):
        return cls(0.0, np.pi)

    @property
    def is_full(self):
        return self.half_width >= np.pi

    @property
    def start(self):
        return self.center - self.half_width

    @property
    def length(self):
        return 2.0 * self.half_width

    def contains(self, theta):
        if self.is_full:
            return np.ones(np.shape(theta), dtype=bool)
        return circle_dist(theta, self.center) <= self.half_width

    def sup_cos(self, phi):
        """max over the arc of cos(theta - phi)."""
        d = float(circle_dist(phi, self.center))
        if d <= self.half_width:
            return 1.0
        return float(np.cos(d - self.half_width))


def cell_overlap(arc, n_theta):
    """Fraction of each cell [i dtheta, (i+1) dtheta) covered by ``arc``."""
    dtheta = TWO_PI / n_theta
    if arc.is_full:
        return np.ones(n_theta)
    a = wrap(arc.start)
    b = a + arc.length
    left = np.arange(n_theta) * dtheta
    frac = np.zeros(n_theta)
    for shift in (0.0, TWO_PI):
        lo = np.maximum(a, left + shift)
        hi = np.minimum(b, left + shift + dtheta)
        frac += np.clip(hi - lo, 0.0, None)
    return np.clip(frac / dtheta, 0.0, 1.0)


def hull_arc(arcs):
    """Smallest arc containing every arc in ``arcs`` (None if empty)."""
    arcs = list(arcs)
    if not arcs:
        return None
    if any(a.is_full for a in arcs):
        return Arc.full()
    pieces = []
    for a in arcs:
        s = wrap(a.start)
        e = s + a.length
        if e > TWO_PI:
            pieces += [(s, TWO_PI), (0.0, e - TWO_PI)]
        else:
            pieces.append((s, e))
    pieces.sort()
    merged = [list(pieces[0])]
    for s, e in pieces[1:]:
        if s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    n = len(merged)
    gaps = [merged[i + 1][0] - merged[i][1] for i in range(n - 1)]
    gaps.append(merged[0][0] + TWO_PI - merged[-1][1])
    i = int(np.argmax(gaps))
    if gaps[i] <= 0.0:
        return Arc.full()
    hull_start = merged[(i + 1) % n][0]
    return Arc.from_endpoints(hull_start, TWO_PI - gaps[i])
