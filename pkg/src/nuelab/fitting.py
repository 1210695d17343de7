"""Decay-model fits in transformed coordinates.

Models, all fitted to ``log u``:

* ``polynomial``:  ``log u = log C - gamma log n``
* ``exponential``: ``log u = log A - c n``
* ``stretched``:   ``log u = log A - c n^eta``, with ``eta`` chosen by
  golden-section search on the residual sum of squares.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ContractViolation, UnderdeterminedFit

MODELS = ("polynomial", "exponential", "stretched")
_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class DecayFit:
    """Result of a decay fit.

    ``params`` holds ``C, gamma`` (polynomial), ``A, c`` (exponential) or
    ``A, c, eta`` (stretched); ``stderr`` has the same keys.
    """

    model: str
    params: dict
    fit_window: tuple
    residual: float
    stderr: dict
    r2: float
    npoints: int
    extra: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.params[key]

    def predict(self, n):
        n = np.asarray(n, dtype=float)
        p = self.params
        if self.model == "polynomial":
            return p["C"] * n ** -p["gamma"]
        if self.model == "exponential":
            return p["A"] * np.exp(-p["c"] * n)
        return p["A"] * np.exp(-p["c"] * n ** p["eta"])

    def to_record(self):
        rec = {"model": self.model}
        for k, v in self.params.items():
            rec[k] = v
            rec[f"{k}_stderr"] = self.stderr.get(k, float("nan"))
        rec.update(residual=self.residual, r2=self.r2, window_lo=self.fit_window[0],
                   window_hi=self.fit_window[1], npoints=self.npoints)
        rec.update(self.extra)
        return rec


def _ols(X, y):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    res = y - X @ coef
    return coef, float(res @ res)


def _r2(y, rss):
    sst = float(((y - y.mean()) ** 2).sum())
    if sst == 0.0:
        return 1.0 if rss <= 1e-30 else 0.0
    return 1.0 - rss / sst


def _cov(J, rss, m):
    dof = m - J.shape[1]
    s2 = rss / dof if dof > 0 else 0.0
    try:
        return s2 * np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        return np.full((J.shape[1], J.shape[1]), np.nan)


def golden_section(fun, lo, hi, tol=1e-10, maxiter=200):
    """Minimize a unimodal function on ``[lo, hi]``."""
    a, b = lo, hi
    c = b - _GOLD * (b - a)
    d = a + _GOLD * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(maxiter):
        if b - a <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLD * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLD * (b - a)
            fd = fun(d)
    x = 0.5 * (a + b)
    return x, fun(x)


def fit_curve(n, u, model, eta_range=(0.02, 1.0)):
    """Fit one decay model to positive values ``u`` at indices ``n``."""
    if model not in MODELS:
        raise ContractViolation(f"unknown model {model!r}")
    n = np.asarray(n, dtype=float)
    u = np.asarray(u, dtype=float)
    if n.shape != u.shape:
        raise ContractViolation("n and u must have equal shapes")
    if np.any(u <= 0) or np.any(n <= 0):
        raise ContractViolation("fit needs positive n and u")
    m = n.size
    need = 3 if model == "stretched" else 2
    if m < max(need, 2):
        raise UnderdeterminedFit(f"{m} points are too few for a {model} fit")
    y = np.log(u)
    window = (float(n.min()), float(n.max()))
    if model in ("polynomial", "exponential"):
        t = np.log(n) if model == "polynomial" else n
        X = np.column_stack([np.ones(m), t])
        coef, rss = _ols(X, y)
        cov = _cov(X, rss, m)
        se = np.sqrt(np.maximum(np.diag(cov), 0.0))
        if model == "polynomial":
            params = {"C": math.exp(coef[0]), "gamma": -coef[1]}
            stderr = {"C": math.exp(coef[0]) * se[0], "gamma": se[1]}
        else:
            params = {"A": math.exp(coef[0]), "c": -coef[1]}
            stderr = {"A": math.exp(coef[0]) * se[0], "c": se[1]}
        return DecayFit(model, params, window, math.sqrt(rss / m), stderr, _r2(y, rss), m)

    def rss_at(eta):
        X = np.column_stack([np.ones(m), n ** eta])
        return _ols(X, y)[1]

    eta, _ = golden_section(rss_at, *eta_range)
    for edge in eta_range:
        if rss_at(edge) < rss_at(eta):
            eta = edge
    X = np.column_stack([np.ones(m), n ** eta])
    coef, rss = _ols(X, y)
    logA, c = coef[0], -coef[1]
    J = np.column_stack([np.ones(m), -(n ** eta), -c * n ** eta * np.log(n)])
    cov = _cov(J, rss, m)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    params = {"A": math.exp(logA), "c": c, "eta": eta}
    stderr = {"A": math.exp(logA) * se[0], "c": se[1], "eta": se[2]}
    return DecayFit("stretched", params, window, math.sqrt(rss / m), stderr, _r2(y, rss), m)


def fit_decay(hist, model, n_lo=5, min_survivors=30, n_hi=None):
    """Fit a decay model to the survival fractions of a tail histogram.

    The window keeps ``n >= n_lo`` (and ``n <= n_hi``) with at least
    ``min_survivors`` survivors; at least 5 such points are required.
    """
    n = np.asarray(hist.n_grid)
    s = np.asarray(hist.survivors, dtype=float)
    keep = (n >= n_lo) & (s >= min_survivors)
    if n_hi is not None:
        keep &= n <= n_hi
    if np.count_nonzero(keep) < 5:
        raise UnderdeterminedFit("fewer than 5 grid points in the fit window")
    return fit_curve(n[keep], s[keep] / hist.total, model)


def loglinear_fit(x, y):
    """Least-squares line through ``(x, log y)``; returns ``(slope, intercept, r2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.any(y <= 0):
        raise UnderdeterminedFit("log-linear fit needs at least 2 positive points")
    ly = np.log(y)
    X = np.column_stack([np.ones(x.size), x])
    coef, rss = _ols(X, ly)
    return float(coef[1]), float(coef[0]), _r2(ly, rss)
