"""Inductive construction of an expanding partition of one base cell.

For a 1D map the hyperbolic-time neighbourhood ``V_n(x)`` is the monotone
branch pullback of the ball ``B(T^n x, delta2)``; the core of ``x`` at time
``n`` is the pullback of the cell containing ``T^n x``. At each time ``n``
grid points of the source cell that are hyperbolic, whose ``V_n`` stays in
the cell, and that are not forbidden by an earlier element are grouped into
cores by a left-to-right scan. Each new element then forbids, at later
times ``m``, the pullback (through its own return time ``t``) of the closed
neighbourhood of radius ``(delta2/10) sigma^((m-t-1)/2)`` of its target cell.
"""
import bisect
from dataclasses import dataclass, field
from fractions import Fraction
import math
from typing import NamedTuple

import numpy as np

from .errors import ContractViolation, DomainError, IllDefinedNeighborhood
from .fitting import loglinear_fit
from .hyperbolic import hyperbolic_mask
from .orbits import recurrence_values
from .tails import TailHistogram


@dataclass(frozen=True)
class Cell:
    index: int
    lo: float
    hi: float

    @property
    def width(self):
        return self.hi - self.lo


@dataclass(frozen=True)
class PartitionElement:
    """A selected core ``W`` with return time ``R`` onto ``target_cell``."""

    id: int
    lo: float
    hi: float
    birth_time: int
    return_time: int
    source_cell: int
    target_cell: int
    base_point: float
    itinerary: tuple = field(repr=False)
    exact: tuple = field(default=None, repr=False, compare=False)

    @property
    def width(self):
        return self.hi - self.lo

    @property
    def exact_width(self):
        """Width as a ``Fraction`` when exact endpoints exist, else a float."""
        if self.exact is None:
            return self.width
        return self.exact[1] - self.exact[0]


def _domain_of(domain):
    if hasattr(domain, "lo") and hasattr(domain, "hi"):
        return float(domain.lo), float(domain.hi)
    lo, hi = domain
    return float(lo), float(hi)


def base_cells(domain, delta2):
    """Uniform tiling of ``domain`` by cells of width at most ``delta2/10``.

    The width is ``delta2/10`` when that divides the domain length, otherwise
    the largest smaller width that does. Cell edges are computed as
    ``lo + L i / N`` so that round boundaries land exactly.
    """
    lo, hi = _domain_of(domain)
    L = hi - lo
    if not (np.isfinite(delta2) and delta2 > 0):
        raise DomainError("delta2 must be positive")
    target = delta2 / 10.0
    if target > L:
        raise DomainError("delta2/10 exceeds the domain length")
    N = max(1, math.ceil(L / target - 1e-9))
    edges = [lo + L * i / N for i in range(N)] + [hi]
    return [Cell(i, edges[i], edges[i + 1]) for i in range(N)]


def cell_edges(cells):
    return np.asarray([c.lo for c in cells] + [cells[-1].hi])


def locate(cells, x):
    """Index of the half-open cell containing each ``x``."""
    edges = cell_edges(cells)
    idx = np.searchsorted(edges, np.asarray(x, dtype=float), side="right") - 1
    return np.clip(idx, 0, len(cells) - 1)


def boundary_constants(cells, lam1):
    """Constants with ``Leb{x in U_i : dist(x, bd U_i) <= lam1^n} <= C2 lam2^n``.

    In 1D the measure is ``min(2 r, |U_i|) <= 2 r``, so ``C2 = 2`` and
    ``lam2 = lam1``.
    """
    return 2.0, float(lam1)


# ------------------------------------------------------------ pullbacks
def itinerary(m, x, n):
    """Forward orbit ``X[..., 0..n]`` and branch indices ``J[..., 0..n-1]``."""
    x = np.asarray(x, dtype=float)
    X = np.empty(x.shape + (n + 1,))
    J = np.empty(x.shape + (n,), dtype=np.int64)
    X[..., 0] = x
    for k in range(n):
        J[..., k] = m.branch_of(X[..., k])
        X[..., k + 1] = m.fmap(X[..., k])
    return X, J


def pull_through(m, J, lo, hi):
    """Pull intervals back through itineraries ``J`` (last step first).

    ``J`` has shape (..., n) and ``lo, hi`` broadcast against ``J[..., 0]``.
    Returns ``(lo, hi, ok)``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    ok = np.ones(np.broadcast(lo, hi, J[..., 0] if J.shape[-1] else lo).shape, dtype=bool)
    for k in range(J.shape[-1] - 1, -1, -1):
        lo, hi, good = m.pull(J[..., k], lo, hi)
        ok &= good
    return lo, hi, ok


def _ball(m, c, delta2):
    lo, hi = c - delta2, c + delta2
    return m.clip_ball(lo, hi)


def branch_domain(m, x, n, delta2):
    """``V_n(x)``: the pullback of ``B(T^n x, delta2)`` along the branches of ``x``.

    Raises
    ------
    IllDefinedNeighborhood
        If a pullback step leaves a monotone branch.
    """
    X, J = itinerary(m, float(x), n)
    lo, hi = _ball(m, X[n], delta2)
    lo, hi, ok = pull_through(m, J, lo, hi)
    if not bool(ok):
        raise IllDefinedNeighborhood(f"pullback of B(T^{n} x, {delta2}) leaves a branch")
    return float(lo), float(hi)


def core_set(m, x, n, cells, delta2):
    """Sub-interval of ``V_n(x)`` mapped by ``T^n`` onto the cell containing ``T^n x``.

    Returns ``((lo, hi), target_cell_index)``.
    """
    branch_domain(m, x, n, delta2)
    X, J = itinerary(m, float(x), n)
    i = int(locate(cells, X[n]))
    lo, hi, _ = pull_through(m, J, cells[i].lo, cells[i].hi)
    return (float(lo), float(hi)), i


class ExactBranches:
    """Rational arithmetic on maps whose branches are affine with float
    coefficients (circle multipliers and affine synthetic maps).

    Every float is an exact rational, so orbits and pullbacks of grid points
    and cell edges are computed without rounding.
    """

    def __init__(self, m):
        self.m = m
        self.lo, self.hi = Fraction(m.lo), Fraction(m.hi)
        if m.kind in ("doubling", "ternary"):
            self.mult = m.mult
            self.affine = None
        else:
            self.mult = None
            self.affine = [(Fraction(s), Fraction(o)) for s, o in m.inverse_affine]

    @classmethod
    def available(cls, m):
        if m.kind in ("doubling", "ternary"):
            return cls(m)
        if m.dim == 1 and m.inverse_affine is not None:
            return cls(m)
        return None

    def _images(self, j):
        s, o = self.affine[j]
        return sorted((o + s * self.lo, o + s * self.hi))

    def branch(self, y):
        if self.mult is not None:
            return min(int(math.floor(self.mult * y)), self.mult - 1)
        for j in range(len(self.affine)):
            a, b = self._images(j)
            if a <= y < b or (j == len(self.affine) - 1 and a <= y <= b):
                return j
        raise IllDefinedNeighborhood(f"no branch contains {float(y)}")

    def forward(self, j, y):
        if self.mult is not None:
            return self.mult * y - j
        s, o = self.affine[j]
        return (y - o) / s

    def step(self, y):
        j = self.branch(y)
        z = self.forward(j, y)
        if self.mult is not None:
            z -= math.floor(z)
        return j, z

    def pull(self, j, lo, hi):
        if self.mult is not None:
            return (lo + j) / self.mult, (hi + j) / self.mult
        s, o = self.affine[j]
        lo, hi = max(lo, self.lo), min(hi, self.hi)
        p, q = o + s * lo, o + s * hi
        return min(p, q), max(p, q)

    def orbit(self, y, n):
        """Exact itinerary and ``T^n y``."""
        y = Fraction(y)
        its = []
        for _ in range(n):
            j, y = self.step(y)
            its.append(j)
        return tuple(its), y

    def pull_through(self, its, lo, hi):
        for j in reversed(its):
            lo, hi = self.pull(j, lo, hi)
        return lo, hi


# ------------------------------------------------------------ construction
@dataclass
class ConstructionState:
    """Bookkeeping of a partition run.

    ``env_lo[e, m], env_hi[e, m]`` bound the set forbidden by element ``e``
    at time ``m`` (core included); ``forbidden[g, n-1]`` records whether grid
    point ``g`` was forbidden at time ``n``.
    """

    time: int
    elements: list
    grid: np.ndarray
    spacing: float
    selected: np.ndarray
    forbidden: np.ndarray
    env_lo: np.ndarray
    env_hi: np.ndarray
    birth: np.ndarray
    selected_at: np.ndarray
    sigma: float
    delta2: float
    source: Cell = None
    hyperbolic_count: np.ndarray = None

    def forbidden_counts(self, N=None):
        N = self.time if N is None else N
        return self.forbidden[:, :N].sum(axis=1)

    def annuli(self, e, m):
        """Left and right pieces of the annulus forbidden by ``e`` exactly at ``m``.

        Pieces are ``(lo, hi)`` in the coordinate of the source cell.
        """
        lo_m, hi_m = self.env_lo[e, m], self.env_hi[e, m]
        lo_n, hi_n = self.env_lo[e, m + 1], self.env_hi[e, m + 1]
        return (lo_m, lo_n), (hi_n, hi_m)


class PartitionResult(NamedTuple):
    elements: list
    tail: TailHistogram
    state: ConstructionState


def _merge(lo, hi):
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    out_lo, out_hi = [], []
    for a, b in zip(lo, hi):
        if out_lo and a <= out_hi[-1]:
            out_hi[-1] = max(out_hi[-1], b)
        else:
            out_lo.append(a)
            out_hi.append(b)
    return np.asarray(out_lo), np.asarray(out_hi)


def _in_closed(ys, lo, hi):
    """Membership of sorted ``ys`` in a union of closed intervals."""
    if lo.size == 0:
        return np.zeros(ys.size, dtype=bool)
    mlo, mhi = _merge(lo, hi)
    k = np.searchsorted(mlo, ys, side="right") - 1
    ok = k >= 0
    out = np.zeros(ys.size, dtype=bool)
    out[ok] = ys[ok] <= mhi[k[ok]]
    return out


def build_partition(m, params, cells, source_cell, horizon, grid, delta2=None):
    """Build the expanding partition of ``cells[source_cell]`` up to ``horizon``.

    Parameters
    ----------
    m : MapSystem
        A 1D map with branch pullbacks.
    params : HyperbolicParams
        ``sigma``, ``delta`` and ``b`` of the hyperbolic-time test.
    cells : list of Cell
    source_cell : int
    horizon : int
    grid : int
        Grid points in the source cell (at least 1000).
    delta2 : float, optional
        Ball radius; defaults to ten times the widest cell.

    Returns
    -------
    PartitionResult
        ``(elements, tail, state)``; ``tail.survivors[n]`` is the exact
        unselected mass after time ``n``.
    """
    if not 0 <= source_cell < len(cells):
        raise ContractViolation("source_cell out of range")
    if grid < 1000:
        raise ContractViolation("grid must hold at least 1000 points per cell")
    if horizon < 1:
        raise ContractViolation("horizon must be at least 1")
    if m.dim != 1:
        raise ContractViolation("partition construction needs a 1D map")
    delta2 = 10.0 * max(c.width for c in cells) if delta2 is None else float(delta2)
    sigma = params.sigma
    U = cells[source_cell]
    G = int(grid)
    H = int(horizon)
    h = U.width / G
    ys = U.lo + (np.arange(G) + 0.5) * h
    X, J = itinerary(m, ys, H)
    dist = m.sdist(X[:, :H])
    A = m.coexp_values(X[:, :H])
    R = recurrence_values(dist, (params.delta,))[0]
    Hm = hyperbolic_mask(A, R, sigma, params.b) & np.all(np.isfinite(A), axis=1)[:, None]

    rho = (delta2 / 10.0) * sigma ** ((np.arange(H + 2) - 1) / 2.0)
    elements = []
    selected = np.zeros(G, dtype=bool)
    selected_at = np.zeros(G, dtype=np.int64)
    forbidden = np.zeros((G, H), dtype=bool)
    env_lo = np.zeros((0, H + 2))
    env_hi = np.zeros((0, H + 2))
    birth = np.zeros(0, dtype=np.int64)
    hyp_count = np.zeros(H + 1, dtype=np.int64)
    edges = cell_edges(cells)
    exact = ExactBranches.available(m)
    exact_edges = [Fraction(v) for v in edges] if exact is not None else None

    for n in range(1, H + 1):
        prior = birth < n
        forb = _in_closed(ys, env_lo[prior, n], env_hi[prior, n])
        forbidden[:, n - 1] = forb
        cand = np.flatnonzero(Hm[:, n - 1] & ~selected)
        if cand.size == 0:
            continue
        Jc = J[cand, :n]
        blo, bhi = _ball(m, X[cand, n], delta2)
        vlo, vhi, ok = pull_through(m, Jc, blo, bhi)
        inside = ok & (vlo >= U.lo) & (vhi <= U.hi)
        hyp_count[n] = np.count_nonzero(inside)
        keep = inside & ~forb[cand]
        cand, Jc = cand[keep], Jc[keep]
        if cand.size == 0:
            continue
        tgt = locate(cells, X[cand, n])
        clo, chi, _ = pull_through(m, Jc, edges[tgt], edges[tgt + 1])
        picked = []
        cur = None
        for i in range(cand.size):
            y = ys[cand[i]]
            if cur is not None and cur[0] <= y < cur[1]:
                continue
            if exact is not None:
                its, _ = exact.orbit(y, n)
                t, core = _exact_core(exact, its, y, n, exact_edges)
            else:
                its = tuple(int(j) for j in Jc[i])
                t, core = _float_core(m, Jc[i], y, int(tgt[i]), edges)
            if core is None:
                continue
            cur = core
            picked.append((i, its, t, core))
        if not picked:
            continue
        nt = np.asarray([p[2] for p in picked])
        Jp = np.asarray([p[1] for p in picked], dtype=np.int64).reshape(len(picked), n)
        # forbidden envelopes for every later time, core included
        t_idx = np.arange(H + 2)
        r_off = np.where(t_idx > n, rho[np.clip(t_idx - n, 0, H + 1)], 0.0)
        lo_t = edges[nt][:, None] - r_off[None, :]
        hi_t = edges[nt + 1][:, None] + r_off[None, :]
        lo_t, hi_t = m.clip_ball(lo_t, hi_t)
        Jn = np.broadcast_to(Jp[:, None, :], (len(picked), H + 2, n))
        elo, ehi, _ = pull_through(m, Jn, lo_t, hi_t)
        elo[:, :n + 1] = np.nan
        ehi[:, :n + 1] = np.nan
        env_lo = np.vstack([env_lo, elo])
        env_hi = np.vstack([env_hi, ehi])
        birth = np.concatenate([birth, np.full(len(picked), n)])
        for i, its, t, core in picked:
            g = cand[i]
            ex = core if exact is not None else None
            e = PartitionElement(len(elements), float(core[0]), float(core[1]), n, n,
                                 source_cell, int(t), float(ys[g]), its, ex)
            elements.append(e)
            hit = (ys >= e.lo) & (ys < e.hi) & ~selected
            selected |= hit
            selected_at[hit] = n

    masses = _unselected_masses(U, elements, H, exact is not None)
    tail = TailHistogram(np.arange(H + 1), masses, U.width, masses[-1], None,
                         "unselected mass", {"grid_error_bound": len(cells) * h})
    state = ConstructionState(H, elements, ys, h, selected, forbidden, env_lo, env_hi,
                              birth, selected_at, sigma, delta2, U, hyp_count)
    return PartitionResult(elements, tail, state)


def _exact_core(exact, its, y, n, exact_edges):
    _, z = exact.orbit(y, n)
    t = bisect.bisect_right(exact_edges, z) - 1
    t = min(max(t, 0), len(exact_edges) - 2)
    lo, hi = exact.pull_through(its, exact_edges[t], exact_edges[t + 1])
    if not lo <= Fraction(y) <= hi:
        return t, None
    return t, (lo, hi)


def _float_core(m, J, y, t, edges):
    # rounding can put T^n y in a neighbouring cell; keep the cell whose core holds y
    for tt in (t, t - 1, t + 1):
        if 0 <= tt < edges.size - 1:
            lo, hi, ok = pull_through(m, J[None, :], edges[tt], edges[tt + 1])
            lo, hi = float(lo[0]), float(hi[0])
            if bool(ok[0]) and lo <= y < hi:
                return tt, (lo, hi)
    return t, None


def _unselected_masses(U, elements, H, exact):
    """``Leb(U) - Leb(S_n)`` for ``n = 0..H`` from element endpoints."""
    masses = np.zeros(H + 1)
    by_birth = {}
    for e in elements:
        by_birth.setdefault(e.birth_time, []).append(e)
    if exact:
        left = Fraction(U.hi) - Fraction(U.lo)
        for n in range(H + 1):
            left -= sum((e.exact_width for e in by_birth.get(n, ())), Fraction(0))
            masses[n] = float(left)
        return masses
    acc = []
    for n in range(H + 1):
        for e in by_birth.get(n, ()):
            acc += [e.hi, -e.lo]
        masses[n] = max(U.width - math.fsum(acc), 0.0) if acc else U.width
    return masses


# ------------------------------------------------------------ diagnostics
@dataclass(frozen=True)
class ElementReport:
    element_id: int
    expansion_min: float
    expansion_required: float
    distortion_D1: float
    contraction_ok: bool
    endpoint_error: float
    passed: bool
    flags: tuple


def _forward_lifts(m, e, y):
    Y = np.empty((y.size, e.return_time + 1))
    Y[:, 0] = y
    for k, j in enumerate(e.itinerary):
        Y[:, k + 1] = m.lift_forward(j, Y[:, k])
    return Y


def element_checks(m, e, cells, sigma, sub=65, tol=1e-9):
    """Expansion, distortion, contraction and onto-ness of ``T^R`` on ``e``."""
    R = e.return_time
    y = e.lo + (np.arange(sub) + 0.5) * (e.width / sub)
    Y = _forward_lifts(m, e, y)
    logd = np.zeros(sub)
    for k in range(R):
        logd = logd + m.coexp_values(Y[:, k])
    exp_min = float(np.exp(logd.min()))
    required = sigma ** (-R / 2.0)
    flags = []
    if not logd.min() >= -(R / 2.0) * math.log(sigma):
        flags.append("expansion")
    ratio = np.exp(logd[:, None] - logd[None, :])
    img = Y[:, R]
    dimg = np.abs(img[:, None] - img[None, :])
    off = dimg > 0
    D1 = float(np.max(np.abs(1.0 - ratio[off]) / dimg[off])) if off.any() else 0.0
    contraction = True
    for k in range(R + 1):
        dk = np.abs(Y[:, k][:, None] - Y[:, k][None, :])
        if np.any(dk > dimg * (1 + 1e-12) + 1e-15):
            contraction = False
            break
    if not contraction:
        flags.append("contraction")
    c = cells[e.target_cell]
    exact = ExactBranches.available(m) if e.exact is not None else None
    if exact is not None:
        ends = list(e.exact)
        for j in e.itinerary:
            ends = [exact.forward(j, v) for v in ends]
        ends.sort()
        endpoint_err = float(max(abs(ends[0] - Fraction(c.lo)), abs(ends[1] - Fraction(c.hi))))
    else:
        ends = _forward_lifts(m, e, np.asarray([e.lo, e.hi]))[:, R]
        endpoint_err = float(np.max(np.abs(np.sort(ends) - np.asarray([c.lo, c.hi]))))
    if endpoint_err > tol:
        flags.append("endpoints")
    return ElementReport(e.id, exp_min, required, D1, contraction, endpoint_err,
                         not flags, tuple(flags))


@dataclass(frozen=True)
class ForbiddenProfile:
    k: np.ndarray
    mass: np.ndarray
    lambda5: float
    r2: float


def forbidden_profile(state, N=None):
    """Grid mass of unselected points forbidden at ``>= k`` instants up to ``N``.

    ``lambda5`` is ``exp(slope)`` of a log-linear fit over ``k >= 1`` with
    positive mass (``nan`` when fewer than two such ``k``).
    """
    N = state.time if N is None else int(N)
    if N > state.time:
        raise ContractViolation("profile requested beyond the construction time")
    counts = state.forbidden_counts(N)
    unsel = ~(state.selected & (state.selected_at <= N))
    kmax = int(counts[unsel].max()) if np.any(unsel) else 0
    ks = np.arange(kmax + 1)
    mass = np.asarray([np.count_nonzero(unsel & (counts >= k)) for k in ks]) * state.spacing
    pos = (ks >= 1) & (mass > 0)
    if np.count_nonzero(pos) >= 2:
        slope, _, r2 = loglinear_fit(ks[pos], mass[pos])
        lam5 = math.exp(slope)
    else:
        lam5, r2 = float("nan"), float("nan")
    return ForbiddenProfile(ks, mass, lam5, r2)


def check_disjoint(elements):
    """Whether the half-open intervals of all elements are pairwise disjoint."""
    iv = sorted(e.exact if e.exact is not None else (e.lo, e.hi) for e in elements)
    return all(iv[i][1] <= iv[i + 1][0] for i in range(len(iv) - 1))


def choose_delta2(m, params, horizon, candidates=None, points=2000):
    """Largest candidate radius for which every hyperbolic time of a grid of
    points admits a well-defined branch neighbourhood."""
    if candidates is None:
        candidates = [m.length * 2.0 ** -k for k in range(1, 12)]
    xs = m.lo + (np.arange(points) + 0.5) * m.length / points
    X, J = itinerary(m, xs, horizon)
    A = m.coexp_values(X[:, :horizon])
    R = recurrence_values(m.sdist(X[:, :horizon]), (params.delta,))[0]
    Hm = hyperbolic_mask(A, R, params.sigma, params.b)
    for d2 in sorted(candidates, reverse=True):
        good = True
        for n in range(1, horizon + 1):
            idx = np.flatnonzero(Hm[:, n - 1])
            if idx.size == 0:
                continue
            lo, hi = _ball(m, X[idx, n], d2)
            _, _, ok = pull_through(m, J[idx, :n], lo, hi)
            if not ok.all():
                good = False
                break
        if good:
            return float(d2)
    return None
