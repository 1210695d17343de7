import math
from fractions import Fraction

import numpy as np
import pytest

from nuelab import maps
from nuelab.errors import ConfigurationError, ContractViolation, EmptyTowerError
from nuelab.fitting import loglinear_fit
from nuelab.hyperbolic import HyperbolicParams
from nuelab.partition import PartitionElement, base_cells
from nuelab.seqcalc import Seq
from nuelab.tower import (RenewalConfig, TowerElement, build_all_partitions, check_summable,
                          gcd_period, induce_tower, level_classes, pooled_elements,
                          q_scheme_tail, renewal_simulate, return_distribution, tower_tail,
                          transfer_tail)

F = Fraction


def elem(i, lo, hi, its, src, tgt):
    return PartitionElement(i, float(lo), float(hi), len(its), len(its), src, tgt,
                            float(lo), tuple(its), (F(lo), F(hi)))


@pytest.fixture(scope="module")
def halves():
    m = maps.doubling()
    return m, base_cells(m, 5.0)


@pytest.fixture(scope="module")
def doubling_tower():
    m = maps.doubling()
    cells = base_cells(m, 0.4)
    p = HyperbolicParams(sigma=2 ** -0.125, delta=1e-4, b=0.125, lam=math.log(2))
    els = pooled_elements(build_all_partitions(m, p, cells, 25, 1000, 0.4))
    return m, cells, els, induce_tower(els, cells, 0, 40, m=m, horizon=25, budget=20000)


# ------------------------------------------------------------ small exact examples
def test_immediate_returns(halves):
    m, cells = halves
    els = [elem(0, F(0), F(1, 4), (0,), 0, 0), elem(1, F(1, 4), F(5, 16), (0, 1, 0), 0, 0)]
    tw = induce_tower(els, cells, 0, 5, m=m)
    assert all(e.k == 1 and e.Rprime == els[e.chain[0][1]].return_time for e in tw.elements)
    assert tw.conserved()


def test_two_cycle(halves):
    m, cells = halves
    # cell 0 = [0, 1/2) -> [1/4, 1/2) maps onto cell 1; cell 1 -> [1/2, 5/8) returns in 2 steps
    els = [elem(0, F(1, 4), F(1, 2), (0,), 0, 1), elem(1, F(1, 2), F(5, 8), (1, 0), 1, 0)]
    tw = induce_tower(els, cells, 0, 5, m=m)
    assert len(tw.elements) == 1
    z = tw.elements[0]
    assert z.Rprime == 3 and z.k == 2 and z.steps == (0, 1, 3)
    assert z.exact == (F(1, 4), F(5, 16))
    assert tw.conserved()
    assert tw.residual_mass("unselected") == F(1, 2) - F(1, 16)


def test_lcap_zero_rejected(halves):
    m, cells = halves
    with pytest.raises(ContractViolation):
        induce_tower([elem(0, 0, F(1, 4), (0,), 0, 0)], cells, 0, 0, m=m)


def test_empty_base(halves):
    m, cells = halves
    with pytest.raises(EmptyTowerError):
        induce_tower([elem(0, F(1, 2), F(5, 8), (1, 0), 1, 0)], cells, 0, 3, m=m)


def test_depth_cap_residual(halves):
    m, cells = halves
    els = [elem(0, F(1, 4), F(1, 2), (0,), 0, 1), elem(1, F(1, 2), F(5, 8), (1, 0), 1, 0)]
    tw = induce_tower(els, cells, 0, 1, m=m)
    assert not tw.elements and tw.residual_mass("depth_cap") == F(1, 4)
    assert tw.conserved()


# ------------------------------------------------------------ tails and periods
def test_tower_tail_point_mass():
    tt = tower_tail([TowerElement(0, 0.0, 1.0, 5, 1, (0, 5), ())], horizon=10)
    assert tt.survivors.tolist() == [1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0]


def test_tower_tail_normalization(halves):
    m, cells = halves
    els = [elem(0, F(0), F(1, 4), (0,), 0, 0), elem(1, F(1, 4), F(1, 2), (0,), 0, 1),
           elem(2, F(1, 2), F(3, 4), (1,), 1, 0), elem(3, F(3, 4), F(1), (1,), 1, 1)]
    tw = induce_tower(els, cells, 0, 60, m=m, horizon=60, budget=10 ** 5)
    tt = tower_tail(tw)
    assert tt.survivors[0] == pytest.approx(0.5)


@pytest.mark.parametrize("rs,g", [((2, 3), 1), ((4, 6), 2), ((5,), 5)])
def test_gcd_period(rs, g):
    tower = [TowerElement(i, 0.0, 0.1, r, 1, (0, r), ()) for i, r in enumerate(rs)]
    assert gcd_period(tower) == g


def test_level_classes_partition_levels():
    tower = [TowerElement(0, 0.0, 0.25, 4, 1, (0, 4), ()),
             TowerElement(1, 0.25, 0.5, 6, 1, (0, 6), ())]
    d1 = gcd_period(tower)
    assert d1 == 2
    cls = level_classes(tower, d1)
    total = sum(float(e.mass) * e.Rprime for e in tower)
    assert cls.sum() == pytest.approx(total)
    assert cls[0] == pytest.approx(cls[1])


# ------------------------------------------------------------ doubling tower
def test_doubling_tower_conservation(doubling_tower):
    _, cells, _, tw = doubling_tower
    assert tw.conserved()
    assert isinstance(tw.base_mass, Fraction)
    assert gcd_period(tw) == 1


def test_doubling_tower_chain_sums(doubling_tower):
    _, _, els, tw = doubling_tower
    R = {e.id: e.return_time for e in els}
    for z in tw.elements:
        assert z.Rprime == sum(R[i] for _, i in z.chain)
        assert z.steps[-1] == z.Rprime and list(z.steps) == sorted(z.steps)


def test_doubling_tower_images_onto_base(doubling_tower):
    m, cells, els, tw = doubling_tower
    by = {e.id: e for e in els}
    U = cells[0]
    for z in tw.elements[::13]:
        ends = list(z.exact)
        for _, i in z.chain:
            for j in by[i].itinerary:
                ends = [2 * v - j for v in ends]
        assert abs(float(ends[0]) - U.lo) <= 1e-9 and abs(float(ends[1]) - U.hi) <= 1e-9


def test_doubling_tower_tail_exponential(doubling_tower):
    _, cells, els, tw = doubling_tower
    tt = tower_tail(tw, horizon=25)
    n, s = tt.n_grid[1:], tt.survivors[1:]
    slope, _, r2 = loglinear_fit(n[s > 0], s[s > 0])
    assert slope < 0 and r2 >= 0.9


def test_transfer_tail_matches_tower_tail(doubling_tower):
    _, cells, els, tw = doubling_tower
    a = tower_tail(tw, horizon=25).survivors
    b = transfer_tail(els, cells, 0, 25).survivors
    assert np.allclose(a, b, rtol=1e-9, atol=1e-15)


def test_return_distribution_is_subprobability(doubling_tower):
    _, cells, els, _ = doubling_tower
    Fd = return_distribution(els, cells, 0, 30)
    assert np.all(Fd >= 0) and np.all(Fd.sum(axis=1) <= 1 + 1e-12)


def test_tower_L(doubling_tower):
    assert doubling_tower[3].L >= 1


# ------------------------------------------------------------ renewal
def test_renewal_certain_selection_equals_increment_tail():
    n = np.arange(60, dtype=float)
    u = np.exp(-0.3 * n)
    cfg = RenewalConfig(Seq(u), eps=1.0, L=1)
    h = renewal_simulate(cfg, 50_000, 40, seed=1)
    S = cfg.survival()[:41]
    sd = np.sqrt(S * (1 - S) / 50_000)
    assert np.all(np.abs(h.fraction - S) <= 4 * sd + 1e-12)


def test_renewal_analytic_geometric():
    cfg = RenewalConfig(Seq(np.r_[1.0, np.zeros(30)]), eps=0.5, L=1)
    h = renewal_simulate(cfg, 100_000, 20, seed=0)
    n = np.arange(16)
    p = 0.5 ** n
    sd = np.sqrt(p * (1 - p) / 1e5)
    assert np.all(np.abs(h.fraction[:16] - p) <= 3 * sd + 1e-12)


def test_renewal_deterministic_and_thread_independent():
    cfg = RenewalConfig(Seq(np.exp(-np.sqrt(np.arange(400.0)))), eps=0.3, L=2)
    a = renewal_simulate(cfg, 30_000, 300, seed=4, chunk_size=5000)
    b = renewal_simulate(cfg, 30_000, 300, seed=4, chunk_size=5000, threads=4)
    assert np.array_equal(a.survivors, b.survivors)


def test_renewal_not_summable():
    n = np.arange(1, 2001, dtype=float)
    cfg = RenewalConfig(Seq(np.r_[1.0, 1.0 / n]), eps=0.3, L=2)
    with pytest.raises(ConfigurationError):
        renewal_simulate(cfg, 100, 2000, seed=0)
    with pytest.raises(ConfigurationError):
        check_summable(cfg, 2000)


def test_renewal_config_validation():
    with pytest.raises(ConfigurationError):
        RenewalConfig(Seq([1.0, 0.5]), eps=0.0)
    with pytest.raises(ConfigurationError):
        RenewalConfig(Seq([1.0, 0.5]), eps=0.5, L=0)
    with pytest.raises(ConfigurationError):
        RenewalConfig(Seq([1.0, 0.2, 0.5]), eps=0.5)


def test_renewal_polynomial_regime():
    N = 20001
    n = np.arange(N, dtype=float)
    u = np.ones(N)
    u[1:] = n[1:] ** -3.0
    cfg = RenewalConfig(Seq(u), eps=0.3, L=2)
    h = renewal_simulate(cfg, 100_000, 2000, seed=2)
    keep = (h.n_grid >= 10) & (h.survivors >= 30)
    slope = np.polyfit(np.log(h.n_grid[keep]), np.log(h.fraction[keep]), 1)[0]
    assert slope <= -3 + 0.2


def test_q_scheme_bound_dominates_simulation():
    u = np.exp(-np.sqrt(np.arange(600.0)))
    cfg = RenewalConfig(Seq(u), eps=0.3, L=2)
    h = renewal_simulate(cfg, 50_000, 200, seed=3)
    sd = np.sqrt(h.fraction * (1 - h.fraction) / 5e4)
    for alpha in (0.1, 0.5, 1.0):
        bound = q_scheme_tail(cfg, alpha, 0.5, 200)
        assert np.all(h.fraction <= bound + 3 * sd + 1e-12)
