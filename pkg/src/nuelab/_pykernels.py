"""Pure-Python (numpy) implementations of the hot kernels.

These are the reference fallback for ``_ckernels``. ``window_scan`` performs
the accumulation in exactly the same order as the compiled version, so the two
backends return identical masks.
"""
import numpy as np


def window_scan(a, ca, rsum, crsum, rpt, cpt):
    """Backward-window test of every end time of every row.

    ``out[s, p-1]`` is 1 iff for every ``1 <= k <= p``::

        sum(a[s, p-k:p])        >= ca * k
        sum(rsum[s, i, p-k:p])  <= crsum[i] * k     for each i
        rpt[s, p-k]             <= cpt * k          (if rpt is given)
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    S, N = a.shape
    m = 0 if rsum is None else rsum.shape[1]
    out = np.zeros((S, N), dtype=np.uint8)
    for p in range(1, N + 1):
        alive = np.ones(S, dtype=bool)
        sa = np.zeros(S)
        sr = np.zeros((S, m))
        for k in range(1, p + 1):
            j = p - k
            sa = sa + a[:, j]
            alive &= sa >= ca * k
            for i in range(m):
                sr[:, i] = sr[:, i] + rsum[:, i, j]
                alive &= sr[:, i] <= crsum[i] * k
            if rpt is not None:
                alive &= rpt[:, j] <= cpt * k
            if not alive.any():
                break
        out[:, p - 1] = alive
    return out


def convolve(x, y):
    """Full linear convolution accumulated in extended precision."""
    x = np.asarray(x, dtype=np.longdouble)
    y = np.asarray(y, dtype=np.longdouble)
    if x.size == 0 or y.size == 0:
        return np.zeros(0)
    return np.convolve(x, y).astype(np.float64)
