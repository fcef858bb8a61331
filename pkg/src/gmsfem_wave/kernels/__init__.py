"""Hot loops of the online stage.

The compiled extension ``_leapfrog`` is used when it has been built; the
numpy/scipy implementation in ``_leapfrog_py`` is the fallback.  Setting the
environment variable ``GMSFEM_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _leapfrog_py

try:
    if os.environ.get("GMSFEM_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python kernels requested")
    from . import _leapfrog as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _leapfrog_py
    BACKEND = "python"

leapfrog_blocks = _impl.leapfrog_blocks


def backends():
    """Mapping of available backend name to kernel module."""
    out = {"python": _leapfrog_py}
    try:
        from . import _leapfrog
        out["cython"] = _leapfrog
    except ImportError:
        pass
    return out
