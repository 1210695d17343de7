"""Catalog of concrete maps.

Every map is a frozen :class:`MapSystem`. One-dimensional maps act on a
circle ``[0, 1)`` or on a closed interval; the Viana skew product acts on
``S^1 x I`` and is treated fiber-wise: its co-expansion is the fiber value
``log|d/dx|`` and its singular set is the line ``x = 0``.

Points are plain floats for 1D maps and ``(omega, x)`` pairs for the skew
product.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np

from .errors import DomainError, IllDefinedNeighborhood, SingularityError

KINDS = ("doubling", "ternary", "quadratic", "viana", "synthetic")

# Largest circle-coordinate value strictly below 1.
_BELOW_ONE = float(np.nextafter(1.0, 0.0))


@lru_cache(maxsize=None)
def misiurewicz_a0(tol=1e-15):
    """Parameter ``a`` in (1, 2) where the critical orbit of ``a - x^2`` lands
    on the positive (orientation-reversing) fixed point.

    Solves ``f_a^2(0) + p(a) = 0`` by bisection, where ``f_a^2(0) = a - a^2``
    and ``p(a) = (-1 + sqrt(1 + 4a)) / 2``. Then ``f_a^3(0) = p(a)``.
    """
    def g(a):
        return (a - a * a) + (-1.0 + math.sqrt(1.0 + 4.0 * a)) / 2.0

    lo, hi = 1.0, 2.0
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _digits_for(m):
    """Number of base-``m`` digits whose integer range fits a float mantissa."""
    d = int(math.floor(53 * math.log(2) / math.log(m) + 1e-12))
    while m ** d > 2 ** 53:
        d -= 1
    return d


@dataclass(frozen=True)
class MapSystem:
    """A concrete dynamical system.

    Use the constructors :func:`doubling`, :func:`ternary`, :func:`quadratic`,
    :func:`viana` and :func:`synthetic` rather than building this directly.

    Attributes
    ----------
    kind : str
        One of ``KINDS``.
    lo, hi : float
        The 1D domain, or the fiber interval of the skew product.
    circle : bool
        Whether the 1D coordinate (or the base of the skew product) is periodic.
    mult : int
        Circle multiplier (doubling, ternary) or base multiplier (viana).
    a0 : float or None
        Quadratic parameter.
    coupling : float
        Coupling strength of the skew product.
    singular : tuple of float
        Critical points of a 1D map, or ``(0.0,)`` for the fiber line.
    lambda_floor : float or None
        Expansion constant; ``None`` means "estimate when needed".
    B, beta : float
        Nondegeneracy constants.
    """

    kind: str
    lo: float = 0.0
    hi: float = 1.0
    circle: bool = True
    mult: int = 2
    a0: float = None
    coupling: float = 0.0
    singular: tuple = ()
    lambda_floor: float = None
    B: float = 2.0
    beta: float = 1.0
    f: object = field(default=None, compare=False, repr=False)
    df: object = field(default=None, compare=False, repr=False)
    inverse_affine: tuple = None
    trace_a: object = field(default=None, compare=False, repr=False)
    trace_dist: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown map kind {self.kind!r}")
        if not self.hi > self.lo:
            raise DomainError("empty domain")
        if self.lambda_floor is not None and not self.lambda_floor > 0:
            raise DomainError("lambda_floor must be positive")
        if not self.B > 1:
            raise DomainError("B must exceed 1")
        if not self.beta > 0:
            raise DomainError("beta must be positive")

    # ------------------------------------------------------------------ basics
    @property
    def dim(self):
        return 2 if self.kind == "viana" else 1

    @property
    def length(self):
        """Length of the 1D domain (or of the fiber interval)."""
        return self.hi - self.lo

    def domain(self):
        """Domain as a tuple of ``(lo, hi)`` pairs."""
        if self.kind == "viana":
            return ((0.0, 1.0), (self.lo, self.hi))
        return ((self.lo, self.hi),)

    def contains(self, p):
        if self.kind == "viana":
            w, x = p
            return 0.0 <= w < 1.0 and self.lo <= x <= self.hi
        x = float(p)
        if self.circle:
            return self.lo <= x < self.hi
        return self.lo <= x <= self.hi

    def _check(self, p):
        if not self.contains(p):
            raise DomainError(f"point {p!r} outside the domain of {self.kind}")

    # ------------------------------------------------------- vectorized pieces
    def fmap(self, x):
        """1D map applied elementwise (fiber map is :meth:`fiber_step`)."""
        x = np.asarray(x, dtype=float)
        if self.kind in ("doubling", "ternary"):
            return np.minimum(np.mod(self.mult * x, 1.0), _BELOW_ONE)
        if self.kind == "quadratic":
            return self.a0 - x * x
        if self.f is not None:
            return np.asarray(self.f(x), dtype=float)
        raise DomainError(f"{self.kind} map has no 1D step")

    def fiber_step(self, w, x):
        return self.a0 + self.coupling * np.sin(2.0 * np.pi * w) - x * x

    def base_step(self, w):
        return np.minimum(np.mod(self.mult * np.asarray(w, dtype=float), 1.0), _BELOW_ONE)

    def coexp_values(self, x):
        """Co-expansion ``log|T'|`` for 1D states or fiber coordinates ``x``."""
        x = np.asarray(x, dtype=float)
        if self.kind in ("doubling", "ternary"):
            return np.full(x.shape, math.log(self.mult))
        if self.kind in ("quadratic", "viana"):
            with np.errstate(divide="ignore"):
                return np.log(2.0 * np.abs(x))
        if self.df is not None:
            with np.errstate(divide="ignore"):
                return np.log(np.abs(np.asarray(self.df(x), dtype=float)))
        raise DomainError(f"{self.kind} map has no derivative")

    def sdist(self, x):
        """Distance to the singular set (``1`` when it is empty)."""
        x = np.asarray(x, dtype=float)
        if not self.singular:
            return np.ones(x.shape)
        d = np.full(x.shape, np.inf)
        for c in self.singular:
            d = np.minimum(d, np.abs(x - c))
        return d

    # ------------------------------------------------------------ point API
    def step(self, p):
        """Image of a single point."""
        self._check(p)
        if self.kind == "viana":
            w, x = p
            return (float(self.base_step(w)), float(self.fiber_step(w, x)))
        return float(self.fmap(p))

    def coexpansion(self, p):
        """``log|T'(p)|`` (fiber derivative for the skew product)."""
        self._check(p)
        x = p[1] if self.kind == "viana" else p
        if float(self.sdist(x)) == 0.0:
            raise SingularityError(0, f"point {p!r} lies on the singular set")
        return float(self.coexp_values(x))

    def distances(self, p, deltas):
        """Distance to S and the truncated distances ``dist_delta``."""
        for d in deltas:
            if not 0.0 < d < 1.0:
                raise DomainError("delta levels must lie in (0, 1)")
        x = p[1] if self.kind == "viana" else p
        dist = float(self.sdist(x))
        return dist, [dist if dist < d else 1.0 for d in deltas]

    # ------------------------------------------------------------ branches
    @property
    def n_branches(self):
        if self.kind in ("doubling", "ternary"):
            return self.mult
        if self.kind == "quadratic":
            return 2
        if self.inverse_affine is not None:
            return len(self.inverse_affine)
        return 1

    def branch_of(self, x):
        """Index of the monotone branch containing each point."""
        x = np.asarray(x, dtype=float)
        if self.kind in ("doubling", "ternary"):
            return np.clip(np.floor(self.mult * x).astype(np.int64), 0, self.mult - 1)
        if self.kind == "quadratic":
            return (x >= 0).astype(np.int64)
        if self.inverse_affine is not None:
            out = np.zeros(x.shape, dtype=np.int64)
            for j, (s, o) in enumerate(self.inverse_affine):
                a, b = sorted((o + s * self.lo, o + s * self.hi))
                out = np.where((x >= a) & (x <= b), j, out)
            return out
        return np.zeros(x.shape, dtype=np.int64)

    def lift_forward(self, j, y):
        """Apply the branch ``j`` of the map to ``y`` without reduction mod 1."""
        y = np.asarray(y, dtype=float)
        if self.kind in ("doubling", "ternary"):
            return self.mult * y - j
        if self.kind == "quadratic":
            return self.a0 - y * y
        if self.inverse_affine is not None:
            s = np.asarray([b[0] for b in self.inverse_affine])[j]
            o = np.asarray([b[1] for b in self.inverse_affine])[j]
            return (y - o) / s
        return self.fmap(y)

    def pull(self, j, lo, hi):
        """Pull the interval ``[lo, hi]`` back through branch ``j``.

        Parameters are arrays (broadcast together). Returns ``(lo', hi', ok)``
        with ``lo' <= hi'``; ``ok`` is False where the pullback is not a
        diffeomorphism onto the interval.
        """
        j = np.asarray(j)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if self.kind in ("doubling", "ternary"):
            ok = (hi - lo) < 1.0
            return (lo + j) / self.mult, (hi + j) / self.mult, ok
        if self.kind == "quadratic":
            a = self.a0
            ok = hi < a
            end = np.where(j == 0, self.lo, self.hi)
            floor = a - end * end
            lo_c = np.maximum(lo, floor)
            ok &= lo_c <= hi
            hi_c = np.minimum(hi, a)
            r_lo = np.sqrt(np.maximum(a - hi_c, 0.0))
            r_hi = np.sqrt(np.maximum(a - lo_c, 0.0))
            # branch 0 is x < 0 (increasing), branch 1 is x >= 0 (decreasing)
            out_lo = np.where(j == 0, -r_hi, r_lo)
            out_hi = np.where(j == 0, -r_lo, r_hi)
            return out_lo, out_hi, ok
        if self.inverse_affine is not None:
            s = np.asarray([b[0] for b in self.inverse_affine])[j]
            o = np.asarray([b[1] for b in self.inverse_affine])[j]
            lo_c = np.maximum(lo, self.lo)
            hi_c = np.minimum(hi, self.hi)
            p, q = o + s * lo_c, o + s * hi_c
            return np.minimum(p, q), np.maximum(p, q), lo_c <= hi_c
        raise IllDefinedNeighborhood(f"{self.kind} map has no inverse branches")

    def clip_ball(self, lo, hi):
        """Intersect a ball with the domain (no-op on the circle)."""
        if self.circle:
            return lo, hi
        return np.maximum(lo, self.lo), np.minimum(hi, self.hi)

    @property
    def max_log_derivative(self):
        """Upper bound of ``log|T'|`` on the domain (1D maps)."""
        if self.kind in ("doubling", "ternary"):
            return math.log(self.mult)
        if self.kind in ("quadratic", "viana"):
            return math.log(2.0 * max(abs(self.lo), abs(self.hi)))
        if self.inverse_affine is not None:
            return max(-math.log(abs(s)) for s, _ in self.inverse_affine)
        xs = np.linspace(self.lo, self.hi, 10001)
        return float(np.max(self.coexp_values(xs)))

    # ------------------------------------------------- Lebesgue-typical orbits
    def _digit_states(self, digits, m, N):
        """Sliding base-``m`` windows of a digit array, as points of [0, 1)."""
        D = _digits_for(m)
        s = np.zeros(digits.shape[:-1] + (N,), dtype=np.int64)
        for i in range(D):
            s = s * m + digits[..., i:i + N]
        return np.minimum(s / float(m ** D), _BELOW_ONE)

    def _seed_digits(self, x0, m):
        D = _digits_for(m)
        s0 = int(math.floor(float(x0) * m ** D))
        s0 = min(max(s0, 0), m ** D - 1)
        out = []
        for _ in range(D):
            out.append(s0 % m)
            s0 //= m
        return np.asarray(out[::-1], dtype=np.int64)

    def circle_orbits(self, S, N, rng, m=None, x0=None):
        """Orbits of ``x -> m x mod 1`` built from random base-``m`` digits.

        Row ``s``, column ``k`` is the ``k``-th iterate. Each step shifts one
        digit out and one fresh digit in, so orbits never collapse onto the
        dyadic grid the way repeated floating-point multiplication does.
        """
        m = self.mult if m is None else m
        D = _digits_for(m)
        digits = rng.integers(0, m, size=(S, N + D - 1), dtype=np.int64)
        if x0 is not None:
            digits[:, :D] = self._seed_digits(x0, m)
        return self._digit_states(digits, m, N)

    def _affine_orbits(self, S, N, rng, x0=None, depth=64):
        s = np.asarray([b[0] for b in self.inverse_affine], dtype=float)
        o = np.asarray([b[1] for b in self.inverse_affine], dtype=float)
        probs = np.abs(s) / np.abs(s).sum()
        J = rng.choice(len(s), size=(S, N + depth), p=probs)
        if x0 is not None:
            y = float(x0)
            for k in range(depth):
                jk = int(self.branch_of(y))
                J[:, k] = jk
                y = float(self.lift_forward(jk, y))
        x = self.lo + (self.hi - self.lo) * rng.random((S, N))
        for i in range(depth, 0, -1):
            j = J[:, i:i + N]
            x = s[j] * x + o[j]
        return np.clip(x, self.lo, self.hi)

    def lebesgue_orbits(self, S, N, rng, x0=None):
        """``S`` orbits of length ``N`` from Lebesgue-random initial points.

        Returns an array ``(S, N)`` for 1D maps, or a pair ``(W, X)`` of such
        arrays (base and fiber) for the skew product. When ``x0`` is given,
        every row starts at ``x0`` (for expanding circle and affine maps,
        only the leading digits of the orbit are fixed by ``x0``).
        """
        if self.kind in ("doubling", "ternary"):
            return self.circle_orbits(S, N, rng, x0=x0)
        if self.kind == "viana":
            if x0 is None:
                W = self.circle_orbits(S, N, rng)
                x = self.lo + (self.hi - self.lo) * rng.random(S)
            else:
                W = self.circle_orbits(S, N, rng, x0=x0[0])
                x = np.full(S, float(x0[1]))
            X = np.empty((S, N))
            for k in range(N):
                X[:, k] = x
                x = self.fiber_step(W[:, k], x)
            return W, X
        if self.inverse_affine is not None:
            return self._affine_orbits(S, N, rng, x0=x0)
        if x0 is None:
            x = self.lo + (self.hi - self.lo) * rng.random(S)
        else:
            x = np.full(S, float(x0))
        X = np.empty((S, N))
        for k in range(N):
            X[:, k] = x
            x = self.fmap(x)
        return X

    def fiber_of(self, states):
        """The coordinate carrying the co-expansion (fiber for viana)."""
        return states[1] if self.kind == "viana" else states


# -------------------------------------------------------------- constructors
def doubling(lambda_floor=None):
    """``x -> 2x mod 1`` on the circle; empty singular set."""
    return MapSystem("doubling", mult=2, B=2.0, beta=1.0,
                     lambda_floor=math.log(2) if lambda_floor is None else lambda_floor)


def ternary(lambda_floor=None):
    """``x -> 3x mod 1`` on the circle; empty singular set."""
    return MapSystem("ternary", mult=3, B=3.0, beta=1.0,
                     lambda_floor=math.log(3) if lambda_floor is None else lambda_floor)


def quadratic(a0=None, lo=-1.8, hi=1.8, lambda_floor=None, B=None, beta=1.0):
    """``x -> a0 - x^2`` on ``[lo, hi]`` with critical point 0.

    ``a0=None`` selects the Misiurewicz parameter.
    """
    a0 = misiurewicz_a0() if a0 is None else float(a0)
    if B is None:
        B = max(2.0 * max(lo * lo, hi * hi), 2.0)
    return MapSystem("quadratic", lo=float(lo), hi=float(hi), circle=False, a0=a0,
                     singular=(0.0,), lambda_floor=lambda_floor, B=B, beta=beta)


def viana(a0=None, coupling=0.01, base_mult=16, lo=-1.8, hi=1.8, lambda_floor=None,
          B=None, beta=1.0):
    """Skew product ``(w, x) -> (m w mod 1, a0 + coupling sin(2 pi w) - x^2)``."""
    if base_mult not in (16, 2):
        raise DomainError("base_mult must be 16 or 2")
    a0 = misiurewicz_a0() if a0 is None else float(a0)
    if B is None:
        B = max(2.0 * max(lo * lo, hi * hi), 2.0)
    return MapSystem("viana", lo=float(lo), hi=float(hi), circle=False, mult=base_mult,
                     a0=a0, coupling=float(coupling), singular=(0.0,),
                     lambda_floor=lambda_floor, B=B, beta=beta)


def synthetic(trace_a=None, trace_dist=None, f=None, df=None, singular=(), lo=0.0,
              hi=1.0, circle=False, inverse_affine=None, lambda_floor=None, B=2.0,
              beta=1.0):
    """A user-supplied system.

    Either give a precomputed co-expansion trace ``trace_a`` (with optional
    per-step distances ``trace_dist`` to S), or a map ``f`` with derivative
    ``df``. ``inverse_affine`` lists ``(slope, offset)`` of the inverse
    branches of a full-branch affine map (for example the tent map), which
    enables branch pullbacks and Lebesgue-typical orbit generation.
    """
    if trace_a is not None:
        trace_a = np.asarray(trace_a, dtype=float)
        if trace_dist is not None:
            trace_dist = np.asarray(trace_dist, dtype=float)
            if trace_dist.shape != trace_a.shape:
                raise DomainError("trace_dist must match trace_a")
    elif f is None or df is None:
        raise DomainError("synthetic map needs a trace or both f and df")
    if inverse_affine is not None:
        inverse_affine = tuple((float(s), float(o)) for s, o in inverse_affine)
    return MapSystem("synthetic", lo=float(lo), hi=float(hi), circle=circle,
                     singular=tuple(float(c) for c in singular), f=f, df=df,
                     inverse_affine=inverse_affine, trace_a=trace_a,
                     trace_dist=trace_dist, lambda_floor=lambda_floor, B=B, beta=beta)


def tent():
    """Full-branch tent map ``x -> 1 - |1 - 2x|`` on ``[0, 1]``."""
    return synthetic(f=lambda x: 1.0 - np.abs(1.0 - 2.0 * x),
                     df=lambda x: np.where(x < 0.5, 2.0, -2.0),
                     inverse_affine=((0.5, 0.0), (-0.5, 1.0)), lambda_floor=math.log(2))


def check_forward_invariance(m, points=10 ** 6, steps=10 ** 3, seed=0, chunk=200_000):
    """Iterate Lebesgue-random points and report whether all stay in the domain.

    For the skew product the fiber must stay inside ``[lo, hi]``; the base
    coordinate is generated digit by digit so it does not degenerate.

    Returns
    -------
    (bool, int)
        Whether every point stayed inside, and the number that escaped.
    """
    rng = np.random.default_rng(seed)
    escaped = 0
    done = 0
    while done < points:
        S = min(chunk, points - done)
        if m.kind == "viana":
            mb = m.mult
            D = _digits_for(mb)
            top = mb ** (D - 1)
            s = rng.integers(0, mb ** D, size=S, dtype=np.int64)
            x = m.lo + (m.hi - m.lo) * rng.random(S)
            alive = np.ones(S, dtype=bool)
            for _ in range(steps):
                w = s / float(mb ** D)
                x = m.fiber_step(w, x)
                alive &= (x >= m.lo) & (x <= m.hi)
                s = (s % top) * mb + rng.integers(0, mb, size=S, dtype=np.int64)
        else:
            X = m.lebesgue_orbits(S, steps + 1, rng)
            alive = np.all((X >= m.lo) & (X <= m.hi), axis=1)
        escaped += int(np.count_nonzero(~alive))
        done += S
    return escaped == 0, escaped
