"""Observables, correlation decay and empirical invariant densities."""
from dataclasses import dataclass
import math

import numpy as np

from .errors import ContractViolation
from .tails import chunk_rng

OBSERVABLE_KINDS = ("coordinate_minus_half", "lipschitz_user", "indicator")


@dataclass(frozen=True)
class Observable:
    """A test function on the state space.

    ``coordinate_minus_half`` uses the 1D coordinate, or the fiber coordinate
    of the skew product. ``lipschitz_user`` interpolates a table
    ``(xs, ys)`` linearly. ``indicator`` is ``1`` on ``[cell[0], cell[1])``.
    """

    kind: str
    table: tuple = None
    cell: tuple = None
    holder_exponent: float = 1.0

    def __post_init__(self):
        if self.kind not in OBSERVABLE_KINDS:
            raise ContractViolation(f"unknown observable kind {self.kind!r}")
        if not 0.0 < self.holder_exponent <= 1.0:
            raise ContractViolation("holder_exponent must lie in (0, 1]")
        if self.kind == "lipschitz_user":
            if self.table is None:
                raise ContractViolation("lipschitz_user needs a table")
            xs, ys = (np.asarray(t, dtype=float) for t in self.table)
            if xs.size < 1 or xs.shape != ys.shape or np.any(np.diff(xs) <= 0):
                raise ContractViolation("table needs increasing xs matching ys")
            object.__setattr__(self, "table", (tuple(xs), tuple(ys)))
        if self.kind == "indicator" and self.cell is None:
            raise ContractViolation("indicator needs a cell")

    @classmethod
    def constant(cls, value):
        return cls("lipschitz_user", table=((0.0,), (float(value),)))

    @property
    def holder_constant(self):
        if self.kind == "coordinate_minus_half":
            return 1.0
        if self.kind == "indicator":
            return math.inf
        xs, ys = (np.asarray(t) for t in self.table)
        if xs.size < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(ys) / np.diff(xs))))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "coordinate_minus_half":
            return x - 0.5
        if self.kind == "indicator":
            lo, hi = self.cell
            return ((x >= lo) & (x < hi)).astype(float)
        xs, ys = self.table
        if len(xs) == 1:
            return np.full(x.shape, ys[0])
        return np.interp(x, xs, ys)


def _block_states(m, length, burn_in, rng):
    st = m.lebesgue_orbits(1, burn_in + length, rng)
    fib = m.fiber_of(st)[0, burn_in:]
    return fib


def _center(v):
    if v.size and np.all(v == v[0]):
        return np.zeros_like(v)
    return v - v.mean()


@dataclass(frozen=True)
class CorrelationResult:
    n: np.ndarray
    cor: np.ndarray
    stderr: np.ndarray
    blocks: int
    resampled: int


def correlate(m, f, g, n_max, samples, burn_in, seed, blocks=20):
    """Estimate ``Cor(f, g o T^n)`` for ``n = 0..n_max``.

    ``samples`` orbit points are split into ``blocks`` independent orbits,
    each started Lebesgue-randomly and run ``burn_in`` steps before recording.
    Expectations are time averages pooled across blocks; standard errors come
    from the leave-one-block-out jackknife.
    """
    if n_max < 1:
        raise ContractViolation("n_max must be at least 1")
    if samples < 100:
        raise ContractViolation("samples must be at least 100")
    if blocks < 2:
        raise ContractViolation("need at least 2 blocks")
    Lb = samples // blocks
    if Lb <= n_max + 1:
        raise ContractViolation("blocks too short for n_max")
    nn = np.arange(n_max + 1)
    Sfg = np.zeros((blocks, n_max + 1))
    Sf = np.zeros((blocks, n_max + 1))
    Sg = np.zeros((blocks, n_max + 1))
    cnt = (Lb - nn).astype(float)
    resampled = 0
    fs, gs = [], []
    for b in range(blocks):
        rng = chunk_rng(seed, b)
        x = _block_states(m, Lb, burn_in, rng)
        while np.any(m.sdist(x) == 0.0):
            resampled += 1
            x = _block_states(m, Lb, burn_in, rng)
        fs.append(np.asarray(f(x), dtype=float))
        gs.append(np.asarray(g(x), dtype=float))
    fall, gall = np.concatenate(fs), np.concatenate(gs)
    fc = _center(fall).reshape(blocks, Lb)
    gc = _center(gall).reshape(blocks, Lb)
    for b in range(blocks):
        fb, gb = fc[b], gc[b]
        cf = np.concatenate([[0.0], np.cumsum(fb)])
        cg = np.concatenate([[0.0], np.cumsum(gb)])
        for n in nn:
            Sfg[b, n] = np.dot(fb[:Lb - n], gb[n:])
            Sf[b, n] = cf[Lb - n]
            Sg[b, n] = cg[Lb] - cg[n]

    def estimate(mask):
        N = cnt * mask.sum()
        return (Sfg[mask].sum(0) / N) - (Sf[mask].sum(0) / N) * (Sg[mask].sum(0) / N)

    allb = np.ones(blocks, dtype=bool)
    cor = estimate(allb)
    jk = np.empty((blocks, n_max + 1))
    for b in range(blocks):
        mask = allb.copy()
        mask[b] = False
        jk[b] = estimate(mask)
    se = np.sqrt((blocks - 1) / blocks * ((jk - jk.mean(0)) ** 2).sum(0))
    return CorrelationResult(nn, cor, se, blocks, resampled)


@dataclass(frozen=True)
class InvariantDensity:
    edges: np.ndarray
    frequency: np.ndarray
    density: np.ndarray


def invariant_histogram(m, x0, length, bins, burn_in=1000, seed=0):
    """Bin frequencies of the orbit of ``x0`` after ``burn_in`` steps.

    ``density`` divides the frequencies by the bin width. For the skew
    product the fiber coordinate is binned.
    """
    if length < bins * 100:
        raise ContractViolation("length must be at least 100 points per bin")
    rng = np.random.default_rng(seed)
    st = m.lebesgue_orbits(1, burn_in + length, rng, x0=x0)
    x = m.fiber_of(st)[0, burn_in:]
    counts, edges = np.histogram(x, bins=bins, range=(m.lo, m.hi))
    freq = counts / float(length)
    return InvariantDensity(edges, freq, freq / np.diff(edges))
