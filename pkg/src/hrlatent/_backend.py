"""Kernel selection: compiled extension if importable, numpy otherwise.

Set ``HRLATENT_PURE_PYTHON=1`` to force the numpy kernels.
"""

import os

from . import _fallback

BACKEND = "python"
extremal_functions = _fallback.extremal_functions

if os.environ.get("HRLATENT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        BACKEND = "compiled"
        extremal_functions = _kernels.extremal_functions


def get_kernel(backend=None):
    """Return the extremal-functions kernel for ``backend`` (None = default)."""
    if backend is None:
        return extremal_functions
    if backend == "python":
        return _fallback.extremal_functions
    if backend == "compiled":
        from . import _kernels
        return _kernels.extremal_functions
    raise ValueError(f"unknown backend {backend!r}")
