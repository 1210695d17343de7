"""Backend selection for the hot kernels.

The compiled extension ``nuelab._ckernels`` is used when it was built;
otherwise the numpy fallback in ``nuelab._pykernels`` is used. Setting the
environment variable ``NUELAB_PURE_PYTHON=1`` before import forces the
fallback.
"""
import os

from . import _pykernels

if os.environ.get("NUELAB_PURE_PYTHON") == "1":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

window_scan = _impl.window_scan
convolve = _impl.convolve


def backends():
    """Return the available kernel modules keyed by name."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
