import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nuelab import maps
from nuelab.errors import DomainError, SingularityError
from nuelab.orbits import (calibrate_delta, estimate_lambda, nondegeneracy_scan,
                           orbit_trace, recurrence_values)


def test_misiurewicz_parameter_lands_on_fixed_point():
    a = maps.misiurewicz_a0()
    f2 = a - a * a
    p = (-1.0 + math.sqrt(1.0 + 4.0 * a)) / 2.0
    assert abs(f2 + p) < 1e-14
    assert 1.0 < a < 2.0
    # critical orbit 0 -> a -> -p -> p, and p is fixed
    x = 0.0
    for _ in range(3):
        x = a - x * x
    assert abs(x - p) < 1e-12
    assert abs((a - x * x) - p) < 1e-12


def test_step_examples():
    v = maps.viana(coupling=0.01)
    a0 = v.a0
    assert v.step((0.0, 0.0)) == (0.0, a0)
    w, x = v.step((0.5, 1.0))
    assert w == 0.0 and abs(x - (a0 - 1.0)) < 1e-15
    assert maps.doubling().step(0.3) == pytest.approx(0.6, abs=1e-15)


def test_step_outside_domain():
    with pytest.raises(DomainError):
        maps.doubling().step(1.2)
    with pytest.raises(DomainError):
        maps.quadratic().step(2.5)


def test_coexpansion_examples():
    assert maps.quadratic().coexpansion(0.5) == 0.0
    assert maps.doubling().coexpansion(0.77) == math.log(2)
    assert maps.viana().coexpansion((0.2, -0.25)) == pytest.approx(math.log(0.5), abs=1e-15)
    with pytest.raises(SingularityError):
        maps.quadratic().coexpansion(0.0)


def test_distances_examples():
    q = maps.quadratic()
    assert q.distances(0.05, [0.1]) == (0.05, [0.05])
    assert q.distances(0.3, [0.1]) == (0.3, [1.0])
    assert maps.doubling().distances(0.4, [0.1]) == (1.0, [1.0])
    with pytest.raises(DomainError):
        q.distances(0.3, [1.5])


def test_orbit_trace_examples():
    t = orbit_trace(maps.doubling(), 0.3, 2, [0.1])
    assert np.all(t.a == math.log(2)) and np.all(t.r == 0)
    e = orbit_trace(maps.quadratic(), 0.3, 0, [0.1])
    assert e.a.size == 0 and e.r.shape == (1, 0)
    with pytest.raises(SingularityError) as ei:
        orbit_trace(maps.quadratic(a0=2.0, lo=-2, hi=2), 0.0, 5, [0.1])
    assert ei.value.index == 0


def test_singularity_index_later_in_orbit():
    # x0 = sqrt(a0) is exact for a0 = 2.25, so T x0 = 0 hits the critical point
    with pytest.raises(SingularityError) as ei:
        orbit_trace(maps.quadratic(a0=2.25, lo=-2.25, hi=2.25), 1.5, 5, [0.1])
    assert ei.value.index == 1


@given(st.floats(0.0, 0.999999), st.integers(0, 40), st.integers(0, 40))
def test_trace_prefix_determinism(x0, n, extra):
    m = maps.quadratic()
    x = -1.5 + 3.0 * x0
    try:
        long = orbit_trace(m, x, n + extra, [0.01, 0.1])
    except SingularityError:
        return
    short = orbit_trace(m, x, n, [0.01, 0.1])
    assert np.array_equal(long.a[:n], short.a)
    assert np.array_equal(long.r[:, :n], short.r)


@given(st.lists(st.floats(1e-6, 2.0), min_size=1, max_size=50))
def test_recurrence_invariants(d):
    d = np.asarray(d)
    deltas = (0.01, 0.1, 0.5)
    r = recurrence_values(d, deltas)
    assert np.all(r >= 0)
    for i, delta in enumerate(deltas):
        assert np.array_equal(r[i] == 0, d >= delta)
    # the set where dist_delta = 1 shrinks as delta grows
    ones = [set(np.flatnonzero(r[i] == 0)) for i in range(len(deltas))]
    assert ones[2] <= ones[1] <= ones[0]


def test_estimate_lambda_doubling_exact():
    est = estimate_lambda(maps.doubling(), 100, 200, seed=1)
    assert abs(est.value - math.log(2)) <= 1e-12 and est.expanding


def test_estimate_lambda_zero_expansion():
    m = maps.synthetic(trace_a=np.zeros(100))
    est = estimate_lambda(m, 10, 100, seed=0)
    assert est.value == 0.0 and not est.expanding


def test_estimate_lambda_viana_positive():
    est = estimate_lambda(maps.viana(), 100, 10 ** 4, seed=0)
    assert est.value > 0 and est.expanding


def test_nondegeneracy_examples():
    q = nondegeneracy_scan(maps.quadratic(lo=-1.9, hi=1.9), 1.0, 2001)
    assert not q.failed and q.B_fit == pytest.approx(2 * 1.9 ** 2, rel=1e-9)
    d = nondegeneracy_scan(maps.doubling(), 1.0, 100)
    assert d.B_fit == 2.0 and not d.failed
    cubic = maps.synthetic(f=lambda x: x ** 3, df=lambda x: 3 * x ** 2, singular=(0.0,),
                           lo=-1.0, hi=1.0)
    assert nondegeneracy_scan(cubic, 1.0, 101).failed


def test_nondegeneracy_bound_holds_on_samples():
    m = maps.quadratic()
    rep = nondegeneracy_scan(m, 1.0, 5001)
    xs = np.random.default_rng(3).uniform(m.lo, m.hi, 10000)
    d = m.sdist(xs)
    ratio = 2 * np.abs(xs)
    B = rep.B_fit * (1 + 1e-9)
    assert np.all(d / B <= ratio) and np.all(ratio <= B / d)


def test_coexpansion_lipschitz_property():
    m = maps.quadratic()
    rep = nondegeneracy_scan(m, 1.0, 1001, seed=4)
    rng = np.random.default_rng(5)
    x = rng.uniform(m.lo, m.hi, 5000)
    d = m.sdist(x)
    h = rng.uniform(-0.5, 0.5, x.size) * d * 0.99
    y = x + h
    lhs = np.abs(m.coexp_values(x) - m.coexp_values(y))
    # log|2x| has Lipschitz constant about 1/dist near the branch, times a safety factor 2
    assert np.all(lhs <= 2 * max(rep.lipschitz_B_fit, 1.0) * np.abs(h) / d + 1e-12)


def test_viana_forward_invariance_small():
    ok, escaped = maps.check_forward_invariance(maps.viana(), points=20000, steps=200)
    assert ok and escaped == 0


def test_lebesgue_orbits_are_uniform_for_tent():
    m = maps.tent()
    X = m.lebesgue_orbits(2000, 60, np.random.default_rng(0))
    counts, _ = np.histogram(X[:, -1], bins=10, range=(0, 1))
    expected = X.shape[0] / 10
    assert np.all(np.abs(counts - expected) < 5 * math.sqrt(expected))


def test_doubling_digit_orbits_do_not_collapse():
    m = maps.doubling()
    X = m.lebesgue_orbits(500, 400, np.random.default_rng(0))
    # a plain float orbit of the doubling map reaches 0 after about 53 steps
    assert np.mean(X[:, -1] == 0.0) < 0.01
    assert np.all((X >= 0) & (X < 1))
    # consecutive states follow the map up to rounding
    assert np.allclose(np.mod(2 * X[:, :-1], 1.0), X[:, 1:], atol=1e-12) or \
        np.mean(np.abs(np.mod(2 * X[:, :-1], 1.0) - X[:, 1:]) < 1e-9) > 0.99


def test_calibrate_delta_quadratic():
    d = calibrate_delta(maps.quadratic(), 0.01, samples=50, n=1000)
    assert d is not None and 0 < d < 1
