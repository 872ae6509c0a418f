"""Select the kernel backend at import time.

The compiled extension is preferred. Setting ``HARDSHRINK_PURE_PYTHON=1``
forces the numpy fallback (useful for debugging and benchmarking).
"""
import os

from . import _kernels_py

if os.environ.get("HARDSHRINK_PURE_PYTHON", "").strip() not in ("", "0"):
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "cython"
    except ImportError:
        kernels = _kernels_py
        BACKEND = "python"


def available_backends():
    """Return ``{name: module}`` for every kernel implementation importable here."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        out["cython"] = _kernels
    return out
