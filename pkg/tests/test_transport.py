from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kuramoto_kinetic.circle import TWO_PI, circle_dist
from kuramoto_kinetic.errors import InstanceTooLarge, MarginalMismatch, MassMismatch
from kuramoto_kinetic.kinetic import KineticState, vonmises_bump
from kuramoto_kinetic.model import FrequencyGrid, ModelParams, stable_equilibrium
from kuramoto_kinetic.transport import (CircleMeasure, ProductMeasure, fibered_w2, plan_cost,
                                        scaled_w2, verify_order, w2_circle, w2_circle_bruteforce)


def circle_oracle(a, b):
    # independent of the library: loop over all matchings
    best = np.inf
    for perm in permutations(range(len(b))):
        d = np.abs(np.mod(np.asarray(a) - np.asarray(b)[list(perm)] + np.pi, TWO_PI) - np.pi)
        best = min(best, float(np.mean(d * d)))
    return np.sqrt(best)


def scaled_oracle(ta, wa, tb, wb, K):
    best = np.inf
    for perm in permutations(range(len(tb))):
        p = list(perm)
        d = np.abs(np.mod(ta - tb[p] + np.pi, TWO_PI) - np.pi)
        best = min(best, float(np.mean(d * d + (wa - wb[p]) ** 2 / K ** 2)))
    return np.sqrt(best)


def random_state(rng, grid, n_theta):
    h = rng.random((grid.n, n_theta)) ** 3
    h /= h.sum(axis=1, keepdims=True) * (TWO_PI / n_theta)
    return KineticState(0.0, grid, h)


# ---------------------------------------------------------------- circle

def test_identical_measures_zero():
    mu = CircleMeasure.uniform([0.3, 2.0, 5.0])
    assert w2_circle(mu, mu).distance == pytest.approx(0.0, abs=1e-12)


def test_single_atoms_wrap():
    d = w2_circle(CircleMeasure.uniform([0.1]), CircleMeasure.uniform([6.1])).distance
    assert d == pytest.approx(TWO_PI - 6.0, abs=1e-12)
    assert d == pytest.approx(0.283185, abs=1e-6)


def test_three_atoms_match_permutations(rng):
    a, b = rng.uniform(0, TWO_PI, 3), rng.uniform(0, TWO_PI, 3)
    d = w2_circle(CircleMeasure.uniform(a), CircleMeasure.uniform(b)).distance
    assert d == pytest.approx(circle_oracle(a, b), abs=1e-10)
    assert w2_circle_bruteforce(a, b) == pytest.approx(circle_oracle(a, b), abs=1e-12)


def test_mass_mismatch():
    with pytest.raises(MassMismatch):
        w2_circle(CircleMeasure([0.0], [1.0]), CircleMeasure([1.0], [0.5]))


def test_plan_reproduces_cost(rng):
    a, b = rng.uniform(0, TWO_PI, 5), rng.uniform(0, TWO_PI, 5)
    res = w2_circle(CircleMeasure.uniform(a), CircleMeasure.uniform(b), with_plan=True)
    assert plan_cost(res.plan, a, b) == pytest.approx(res.cost, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_circle_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    ms = [CircleMeasure(rng.uniform(0, TWO_PI, 4), np.full(4, 0.25)) for _ in range(3)]
    d = lambda x, y: w2_circle(x, y).distance
    assert abs(d(ms[0], ms[1]) - d(ms[1], ms[0])) < 1e-12
    assert d(ms[0], ms[2]) <= d(ms[0], ms[1]) + d(ms[1], ms[2]) + 1e-9
    assert d(ms[0], ms[0]) < 1e-7


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_circle_weighted_matches_network_flow(seed):
    rng = np.random.default_rng(seed)
    a = CircleMeasure(rng.uniform(0, TWO_PI, 5), rng.dirichlet(np.ones(5)))
    b = CircleMeasure(rng.uniform(0, TWO_PI, 4), rng.dirichlet(np.ones(4)))
    # equal frequencies make the scaled cost purely angular
    pa = ProductMeasure(a.theta, np.zeros(a.theta.size), a.mass)
    pb = ProductMeasure(b.theta, np.zeros(b.theta.size), b.mass)
    ref = scaled_w2(pa, pb, ModelParams(1.0), method="network_simplex").distance
    assert w2_circle(a, b).distance == pytest.approx(ref, abs=1e-9)


# ---------------------------------------------------------------- fibered

def test_fibered_identical_zero():
    s = vonmises_bump(FrequencyGrid.from_density(0.1, 3), 32)
    assert fibered_w2(s, s) == pytest.approx(0.0, abs=1e-12)


def test_fibered_rigid_rotation():
    grid = FrequencyGrid.from_density(0.1, 3)
    n = 64
    h = np.zeros((3, n))
    h[:, 10:14] = 1.0
    h /= h.sum(axis=1, keepdims=True) * (TWO_PI / n)
    a = KineticState(0.0, grid, h)
    b = KineticState(0.0, grid, np.roll(h, 7, axis=1))
    assert fibered_w2(a, b) == pytest.approx(7 * TWO_PI / n, abs=1e-12)


def test_fibered_needs_shared_grid():
    a = vonmises_bump(FrequencyGrid.from_density(0.1, 3), 32)
    b = vonmises_bump(FrequencyGrid.from_density(0.2, 3), 32)
    with pytest.raises(MarginalMismatch):
        fibered_w2(a, b)


def test_fibered_to_equilibrium_closed_form():
    p = ModelParams(10.0, 0.1)
    grid = FrequencyGrid.from_density(0.1, 5)
    eq = stable_equilibrium(grid, p)
    s = vonmises_bump(grid, 64, 0.3, 3.0)
    per = [w2_circle(CircleMeasure.from_density(s.h[j]), CircleMeasure([eq.atoms[j]], [1.0])).distance ** 2
           for j in range(grid.n)]
    assert fibered_w2(s, eq) == pytest.approx(np.sqrt(np.dot(grid.weights, per)), abs=1e-10)


def test_rotation_triangle_bounds(rng):
    grid = FrequencyGrid.from_density(0.1, 3)
    a, b = random_state(rng, grid, 32), random_state(rng, grid, 32)
    old = fibered_w2(a, b)
    k = 3
    c = k * TWO_PI / 32
    br = KineticState(0.0, grid, np.roll(b.h, k, axis=1))
    new = fibered_w2(a, br)
    assert abs(old - c) - 1e-9 <= new <= old + c + 1e-9


# ---------------------------------------------------------------- scaled

def two_point_construction(t1, t2, w1, w2):
    mu = ProductMeasure([t1, t2], [w1, w2], [0.5, 0.5])
    nu = ProductMeasure([t2, t1], [w1, w2], [0.5, 0.5])
    return mu, nu


@pytest.mark.parametrize("eps_w,K", [(0.05, 1.0), (0.3, 0.5), (2.0, 1.0), (0.2, 10.0)])
def test_two_point_scaled_enumeration(eps_w, K):
    t1, t2 = 0.5, 1.3
    mu, nu = two_point_construction(t1, t2, -eps_w / 2, eps_w / 2)
    e_th = circle_dist(t1, t2)
    got = scaled_w2(mu, nu, ModelParams(K)).cost
    assert got == pytest.approx(min(e_th ** 2, eps_w ** 2 / K ** 2), abs=1e-12)


def test_two_point_fibered_and_order():
    n = 64
    dth = TWO_PI / n
    i1, i2 = 5, 18
    e_th = (i2 - i1) * dth
    for eps_w, K in ((0.1, 1.0), (4.0, 1.0)):
        grid = FrequencyGrid(np.array([-eps_w / 2, eps_w / 2]), np.array([0.5, 0.5]), eps_w)
        h_mu, h_nu = np.zeros((2, n)), np.zeros((2, n))
        h_mu[0, i1] = h_mu[1, i2] = 1.0 / dth
        h_nu[0, i2] = h_nu[1, i1] = 1.0 / dth
        a, b = KineticState(0.0, grid, h_mu), KineticState(0.0, grid, h_nu)
        assert fibered_w2(a, b) ** 2 == pytest.approx(e_th ** 2, abs=1e-14)
        rep = verify_order(a, b, ModelParams(K))
        assert rep.passed
        sw = rep.extra["sw2"]
        assert sw ** 2 == pytest.approx(min(e_th ** 2, eps_w ** 2 / K ** 2), abs=1e-12)
        if eps_w / K >= e_th:
            assert abs(sw - rep.extra["w2g"]) < 1e-9


@pytest.mark.parametrize("method", ["exhaustive", "hungarian", "network_simplex"])
def test_scaled_four_atoms_all_backends(rng, method):
    ta, tb = rng.uniform(0, TWO_PI, 4), rng.uniform(0, TWO_PI, 4)
    wa, wb = rng.uniform(-0.5, 0.5, 4), rng.uniform(-0.5, 0.5, 4)
    got = scaled_w2(ProductMeasure.uniform(ta, wa), ProductMeasure.uniform(tb, wb), ModelParams(2.0),
                    method=method).distance
    assert got == pytest.approx(scaled_oracle(ta, wa, tb, wb, 2.0), abs=1e-10)


def test_scaled_plan_cost(rng):
    ta, tb = rng.uniform(0, TWO_PI, 6), rng.uniform(0, TWO_PI, 6)
    wa, wb = rng.uniform(-1, 1, 6), rng.uniform(-1, 1, 6)
    res = scaled_w2(ProductMeasure.uniform(ta, wa), ProductMeasure.uniform(tb, wb), ModelParams(3.0),
                    method="hungarian", with_plan=True)
    c = sum(m * (circle_dist(ta[i], tb[j]) ** 2 + (wa[i] - wb[j]) ** 2 / 9.0) for i, j, m in res.plan)
    assert c == pytest.approx(res.cost, abs=1e-12)


def test_scaled_limits():
    big = ProductMeasure.uniform(np.linspace(0, 6, 9), np.zeros(9))
    with pytest.raises(InstanceTooLarge):
        scaled_w2(big, big, ModelParams(1.0), method="exhaustive")
    huge = ProductMeasure(np.linspace(0, 6, 3000), np.zeros(3000), np.full(3000, 1 / 3000))
    other = ProductMeasure(np.linspace(0, 6, 2999), np.zeros(2999), np.full(2999, 1 / 2999))
    with pytest.raises(InstanceTooLarge):
        scaled_w2(huge, other, ModelParams(1.0))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_scaled_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    ms = [ProductMeasure.uniform(rng.uniform(0, TWO_PI, 5), rng.uniform(-1, 1, 5)) for _ in range(3)]
    p = ModelParams(1.5)
    d = lambda x, y: scaled_w2(x, y, p).distance
    assert abs(d(ms[0], ms[1]) - d(ms[1], ms[0])) < 1e-12
    assert d(ms[0], ms[2]) <= d(ms[0], ms[1]) + d(ms[1], ms[2]) + 1e-9
    assert d(ms[0], ms[0]) < 1e-7


def test_scaled_below_fibered_random_pairs(rng):
    grid = FrequencyGrid.from_density(0.3, 3)
    p = ModelParams(2.0)
    for _ in range(10):
        a, b = random_state(rng, grid, 16), random_state(rng, grid, 16)
        rep = verify_order(a, b, p)
        assert rep.min_margin >= -1e-8
        # the theta-only cost is below the mixed cost
        th_only = scaled_w2(a, b, ModelParams(1e12)).distance
        assert th_only <= rep.extra["sw2"] + 1e-9
