"""Kernel backend selection.

The compiled module is used when it is importable; set
``COVNET_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from ._ext import fallback

if os.environ.get("COVNET_PURE_PYTHON", "") not in ("", "0"):
    _impl = fallback
    BACKEND = "python"
else:
    try:
        from ._ext import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = fallback
        BACKEND = "python"

hull_membership = _impl.hull_membership
hull_stats = _impl.hull_stats
rk4_advance = _impl.rk4_advance

__all__ = ["BACKEND", "hull_membership", "hull_stats", "rk4_advance", "fallback"]
