"""Induced full-return towers over a base cell and the abstract renewal process.

A tower element is a chain of partition elements ``W_1, W_2, ...`` whose
images pass through cells until the base cell is reached again; its return
time is the sum of the constituent return times. Chains are followed through
the branch geometry (exact rational arithmetic for affine maps) in order of
increasing cumulative time. Pieces left over when the work budget runs out
can be resolved at the level of cell-to-cell transition masses, which is
exact for maps with affine branches.
"""
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
import heapq
import math
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, ContractViolation, EmptyTowerError
from .partition import ExactBranches, build_partition, pull_through
from .seqcalc import Seq, convolution_power_tail
from .tails import TailHistogram, _chunks, chunk_rng

RESIDUAL_TAGS = ("unselected", "beyond_horizon", "depth_cap", "budget")


@dataclass(frozen=True)
class TowerElement:
    """Piece ``Z`` of the base cell with ``T^{Rprime}(Z)`` equal to the base cell.

    ``steps`` holds the cumulative times ``t_0 = 0 < t_1 < ... < t_k``;
    ``chain`` the ``(cell, element id)`` pairs followed.
    """

    id: int
    lo: float
    hi: float
    Rprime: int
    k: int
    steps: tuple
    chain: tuple = field(repr=False)
    exact: tuple = field(default=None, repr=False, compare=False)

    @property
    def mass(self):
        return self.exact[1] - self.exact[0] if self.exact is not None else self.hi - self.lo


@dataclass(frozen=True)
class ResidualPiece:
    """Part of the base cell with no completed return.

    ``time`` is the cumulative time reached and ``cell`` the cell that the
    piece covers at that time. For ``unselected`` pieces the return time is
    known to exceed ``time`` plus the partition horizon.
    """

    lo: object
    hi: object
    tag: str
    time: int
    cell: int

    @property
    def mass(self):
        return self.hi - self.lo


class TowerResult(NamedTuple):
    elements: list
    residual: list
    base_cell: int
    base_mass: object
    mass_returns: np.ndarray
    L: int

    def residual_mass(self, tag=None):
        ms = [r.mass for r in self.residual if tag is None or r.tag == tag]
        return _sum(ms)

    def conserved(self):
        """Whether element plus residual masses add up to the base mass exactly."""
        total = _sum([e.mass for e in self.elements] + [r.mass for r in self.residual])
        if isinstance(total, Fraction) or isinstance(self.base_mass, Fraction):
            return Fraction(total) == Fraction(self.base_mass)
        return total == self.base_mass


def _sum(xs):
    xs = list(xs)
    if any(isinstance(x, Fraction) for x in xs):
        return sum((Fraction(x) for x in xs), Fraction(0))
    return math.fsum(xs)


def _group(elements):
    by = {}
    for e in elements:
        by.setdefault(e.source_cell, []).append(e)
    for v in by.values():
        v.sort(key=lambda e: e.lo)
    return by


def cell_graph(elements, cells):
    """Adjacency ``cell -> set of target cells`` reached with positive mass."""
    g = {c.index: set() for c in cells}
    for e in elements:
        if e.width > 0:
            g[e.source_cell].add(e.target_cell)
    return g


def chase_depth(elements, cells, base_cell):
    """Smallest depth ``L`` such that every cell reachable from the base can
    return to it within ``L`` partition steps (``None`` if some cannot)."""
    g = cell_graph(elements, cells)
    rev = {c: set() for c in g}
    for a, ts in g.items():
        for b in ts:
            rev[b].add(a)
    # shortest number of steps from each cell into the base
    dist = {}
    q = deque()
    for a in rev[base_cell]:
        dist[a] = 1
        q.append(a)
    while q:
        a = q.popleft()
        for p in rev[a]:
            if p not in dist:
                dist[p] = dist[a] + 1
                q.append(p)
    seen = {base_cell}
    q = deque([base_cell])
    while q:
        a = q.popleft()
        for b in g[a]:
            if b not in seen:
                seen.add(b)
                q.append(b)
    if any(c not in dist for c in seen):
        return None
    return max(dist[c] for c in seen)


def _make_puller(m, exact):
    if exact is not None:
        def pull(its, lo, hi):
            return exact.pull_through(its, Fraction(lo), Fraction(hi))
    else:
        def pull(its, lo, hi):
            J = np.asarray(its, dtype=np.int64).reshape(1, -1)
            a, b, _ = pull_through(m, J, lo, hi)
            return float(a[0]), float(b[0])
    return pull


def _tile(plo, phi, kids):
    """Split ``[plo, phi)`` into the child intervals and the gaps between them.

    Children are clipped into the parent and made contiguous so that the
    pieces telescope exactly to the parent.
    """
    kids = sorted(kids, key=lambda t: t[0])
    out = []
    cur = plo
    for lo, hi, payload in kids:
        lo = min(max(lo, cur), phi)
        hi = min(max(hi, lo), phi)
        if lo > cur:
            out.append((cur, lo, None))
        if hi > lo:
            out.append((lo, hi, payload))
        cur = max(cur, hi)
    if cur < phi:
        out.append((cur, phi, None))
    return out


def induce_tower(elements, cells, base_cell, L_cap, m=None, horizon=None, budget=20000,
                 resolve=True):
    """Compose partition returns until the base cell is reached again.

    Parameters
    ----------
    elements : list of PartitionElement
        Elements of the partitions of every cell (grouped by ``source_cell``).
    cells : list of Cell
    base_cell : int
    L_cap : int
        Maximum number of composed returns in one chain.
    m : MapSystem, optional
        Needed for maps without affine branches (float pullbacks).
    horizon : int, optional
        Largest cumulative time followed; longer chains become residual.
    budget : int
        Maximum number of pieces created by the geometric chase.
    resolve : bool
        Whether pieces left by the budget are resolved through the
        cell-level transition masses (``mass_returns``).

    Returns
    -------
    TowerResult
    """
    if L_cap < 1:
        raise ContractViolation("L_cap must be at least 1")
    by = _group(elements)
    if not by.get(base_cell):
        raise EmptyTowerError(f"base cell {base_cell} has no partition elements")
    exact = None
    if all(e.exact is not None for e in elements):
        if m is None:
            raise ContractViolation("exact elements need the map for pullbacks")
        exact = ExactBranches.available(m)
    elif m is None:
        raise ContractViolation("the map is needed for pullbacks")
    pull = _make_puller(m, exact)
    conv = Fraction if exact is not None else float
    U = cells[base_cell]
    if horizon is None:
        horizon = max(e.return_time for e in elements) * L_cap
    cnt = 0
    heap = [(0, cnt, conv(U.lo), conv(U.hi), (), base_cell, (0,), ())]
    tower, residual = [], []
    created = 1
    while heap:
        t, _, lo, hi, its, c, steps, chain = heapq.heappop(heap)
        if created >= budget:
            residual.append(ResidualPiece(lo, hi, "budget", t, c))
            continue
        k = len(chain)
        if k >= L_cap:
            residual.append(ResidualPiece(lo, hi, "depth_cap", t, c))
            continue
        kids = []
        for e in by.get(c, ()):
            clo, chi = pull(its, e.exact[0] if exact is not None else e.lo,
                            e.exact[1] if exact is not None else e.hi)
            kids.append((clo, chi, e))
        for a, b, e in _tile(lo, hi, kids):
            created += 1
            if e is None:
                residual.append(ResidualPiece(a, b, "unselected", t, c))
                continue
            t2 = t + e.return_time
            ch2 = chain + ((c, e.id),)
            st2 = steps + (t2,)
            if t2 > horizon:
                residual.append(ResidualPiece(a, b, "beyond_horizon", t2, e.target_cell))
            elif e.target_cell == base_cell:
                ex = (a, b) if exact is not None else None
                tower.append(TowerElement(len(tower), float(a), float(b), t2, len(ch2), st2,
                                          ch2, ex))
            else:
                cnt += 1
                heapq.heappush(heap, (t2, cnt, a, b, its + e.itinerary, e.target_cell,
                                      st2, ch2))
    returns = np.zeros(horizon + 1)
    if resolve:
        pending = [r for r in residual if r.tag == "budget"]
        if pending:
            F = return_distribution(elements, cells, base_cell, horizon)
            for r in pending:
                if r.time <= horizon:
                    returns[r.time:] += float(r.mass) * F[r.cell, :horizon + 1 - r.time]
    L = chase_depth(elements, cells, base_cell)
    base_mass = conv(U.hi) - conv(U.lo)
    return TowerResult(tower, residual, base_cell, base_mass, returns, L)


def return_distribution(elements, cells, base_cell, horizon):
    """``F[c, n]``: fraction of cell ``c`` that first reaches the base cell at
    time ``n`` through chains of partition elements.

    Each element carries the fraction ``|W| / |U_c|`` of its cell, which is
    exact for maps with affine branches.
    """
    N = len(cells)
    width = np.asarray([c.width for c in cells])
    trans = {}
    for e in elements:
        key = (e.source_cell, e.target_cell, e.return_time)
        trans[key] = trans.get(key, 0.0) + float(e.exact_width) / width[e.source_cell]
    src = np.asarray([k[0] for k in trans], dtype=np.int64)
    tgt = np.asarray([k[1] for k in trans], dtype=np.int64)
    R = np.asarray([k[2] for k in trans], dtype=np.int64)
    w = np.asarray(list(trans.values()))
    F = np.zeros((N, horizon + 1))
    direct = tgt == base_cell
    for n in range(1, horizon + 1):
        hit = (R == n) & direct
        np.add.at(F[:, n], src[hit], w[hit])
        via = (~direct) & (R < n)
        np.add.at(F[:, n], src[via], w[via] * F[tgt[via], n - R[via]])
    return F


def transfer_tail(elements, cells, base_cell, horizon):
    """``Leb{tau > n}`` of the base cell from cell-level transition masses."""
    F = return_distribution(elements, cells, base_cell, horizon)
    U = cells[base_cell]
    surv = U.width * (1.0 - np.cumsum(F[base_cell]))
    surv = np.minimum.accumulate(np.maximum(surv, 0.0))
    return TailHistogram(np.arange(horizon + 1), surv, U.width, surv[-1], None,
                         "return time (transition masses)")


def tower_tail(tower, residual=0.0, horizon=None):
    """Survival function ``Leb{tau > n}`` of a tower.

    ``tower`` is a :class:`TowerResult` (residual pieces and resolved
    returns included) or a list of :class:`TowerElement` with a separate
    ``residual`` mass that survives through the horizon.
    """
    if isinstance(tower, TowerResult):
        elems = tower.elements
        H = tower.mass_returns.size - 1 if horizon is None else int(horizon)
        resolved = np.zeros(H + 1)
        k = min(H + 1, tower.mass_returns.size)
        resolved[:k] = tower.mass_returns[:k]
        total = float(tower.base_mass)
    else:
        elems = list(tower)
        if not elems and not residual:
            raise EmptyTowerError("tower is empty")
        H = max(e.Rprime for e in elems) if horizon is None else int(horizon)
        resolved = np.zeros(H + 1)
        total = math.fsum([float(e.mass) for e in elems]) + float(residual)
    by_r = {}
    for e in elems:
        by_r[e.Rprime] = by_r.get(e.Rprime, 0.0) + float(e.mass)
    ret = np.zeros(H + 1)
    for r, v in by_r.items():
        if r <= H:
            ret[r] += v
    surv = total - np.cumsum(ret) - np.cumsum(resolved)
    surv = np.minimum.accumulate(np.maximum(surv, 0.0))
    return TailHistogram(np.arange(H + 1), surv, total, surv[-1], None, "tower return time")


def gcd_period(tower):
    """Greatest common divisor of the return times."""
    elems = tower.elements if isinstance(tower, TowerResult) else tower
    if not elems:
        raise EmptyTowerError("tower is empty")
    g = 0
    for e in elems:
        g = math.gcd(g, int(e.Rprime))
    return g


def level_classes(tower, d1):
    """Mass of the tower levels ``X_k = {(x, i): i = k mod d1}``.

    Returns an array of ``d1`` masses; the level mass of an element is
    counted once per level ``0 <= i < Rprime``.
    """
    elems = tower.elements if isinstance(tower, TowerResult) else tower
    if d1 < 1:
        raise ContractViolation("d1 must be positive")
    out = np.zeros(d1)
    for e in elems:
        q, r = divmod(int(e.Rprime), d1)
        out += q * float(e.mass)
        out[:r] += float(e.mass)
    return out


def build_all_partitions(m, params, cells, horizon, grid, delta2=None, threads=1):
    """Partitions of every cell; returns ``{cell: PartitionResult}``."""
    def run(i):
        return build_partition(m, params, cells, i, horizon, grid, delta2)

    idx = [c.index for c in cells]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            res = list(ex.map(run, idx))
    else:
        res = [run(i) for i in idx]
    return dict(zip(idx, res))


def pooled_elements(partitions):
    """Elements of all partitions with ids made unique across cells."""
    out = []
    for c in sorted(partitions):
        for e in partitions[c].elements:
            out.append(e.__class__(len(out), e.lo, e.hi, e.birth_time, e.return_time,
                                   e.source_cell, e.target_cell, e.base_point,
                                   e.itinerary, e.exact))
    return out


# ------------------------------------------------------------ renewal process
@dataclass(frozen=True)
class RenewalConfig:
    """Abstract renewal scheme.

    Increments have survival ``P(X > n) = min(1, C u_n)`` for ``n >= 1``
    (and ``P(X > 0) = 1``); after every block of ``L`` increments the process
    is selected with probability ``eps``.
    """

    u: Seq
    eps: float
    L: int = 1
    C: float = 1.0

    def __post_init__(self):
        if not isinstance(self.u, Seq):
            object.__setattr__(self, "u", Seq(self.u))
        if not 0.0 < self.eps <= 1.0:
            raise ConfigurationError("eps must lie in (0, 1]")
        if int(self.L) != self.L or self.L < 1:
            raise ConfigurationError("L must be a positive integer")
        if not self.C > 0:
            raise ConfigurationError("C must be positive")
        if self.u.horizon < 2:
            raise ConfigurationError("u needs at least two entries")
        s = self.survival()
        if np.any(np.diff(s) > 0):
            raise ConfigurationError("C u_n must be nonincreasing for n >= 1")

    def survival(self):
        """``S[n] = P(X > n)`` for ``n = 0..len(u)-1``."""
        s = np.minimum(1.0, self.C * self.u.values)
        s[0] = 1.0
        return s

    def pmf(self):
        s = self.survival()
        p = np.zeros(s.size)
        p[1:] = s[:-1] - s[1:]
        return p


def check_summable(cfg, horizon):
    """Raise when the truncated mean of the increments still grows at ``horizon``."""
    s = cfg.survival()
    h = min(int(horizon), s.size)
    full = math.fsum(s[:h])
    half = math.fsum(s[:max(h // 2, 1)])
    if full - half > 0.05 * full:
        raise ConfigurationError(
            "increment tail is not summable over the horizon "
            f"(sum over [h/2, h) is {(full - half) / full:.3f} of the total)")


def _draw_increments(s, U):
    # X = min{n >= 1: S(n) < U}; -1 marks increments beyond the table
    idx = np.searchsorted(-s, -U, side="right")
    return np.where(idx < s.size, idx, -1)


def renewal_simulate(cfg, samples, horizon, seed, threads=1, chunk_size=10000):
    """Empirical tail of the selection time ``tau``.

    Returns a :class:`TailHistogram`; samples with ``tau > horizon`` (or
    with an increment beyond the tabulated tail) are censored.
    """
    if samples < 1:
        raise ContractViolation("samples must be positive")
    check_summable(cfg, horizon)
    s = cfg.survival()
    L, eps = int(cfg.L), cfg.eps

    def run(job):
        c, k = job
        rng = chunk_rng(seed, c)
        blocks = rng.geometric(eps, size=k)
        counts = blocks * L
        U = 1.0 - rng.random(int(counts.sum()))
        X = _draw_increments(s, U)
        bad = X < 0
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        tau = np.add.reduceat(np.where(bad, 0, X), starts)
        cens = (np.add.reduceat(bad.astype(np.int64), starts) > 0) | (tau > horizon)
        vals = np.minimum(tau, horizon + 1)
        vq = np.where(cens, horizon + 1, vals)
        cnt = np.bincount(vq, minlength=horizon + 2)
        surv = k - np.cumsum(cnt)[:horizon + 1]
        return surv, int(cens.sum())

    jobs = _chunks(samples, chunk_size, 0)
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    surv = np.sum([p[0] for p in parts], axis=0)
    cens = sum(p[1] for p in parts)
    return TailHistogram(np.arange(horizon + 1), surv, samples, cens, seed, "renewal tau",
                         {"eps": eps, "L": L, "C": cfg.C})


def q_scheme_tail(cfg, alpha, eta, horizon):
    """Bound ``(1 - eps)^{floor(q/L)} + P(t_q > n)`` with ``q = floor(alpha n^eta)``.

    ``P(t_q > n)`` is the tail of the sum of ``q`` independent increments.
    """
    if not 0.0 < eta <= 1.0 or not alpha > 0:
        raise ContractViolation("need alpha > 0 and eta in (0, 1]")
    pmf = cfg.pmf()
    out = np.ones(horizon + 1)
    cache = {}
    for n in range(horizon + 1):
        q = int(math.floor(alpha * n ** eta))
        if q < 1:
            continue
        if q not in cache:
            cache[q] = convolution_power_tail(pmf, q, horizon)
        out[n] = min(1.0, (1.0 - cfg.eps) ** (q // cfg.L) + cache[q][n])
    return out
