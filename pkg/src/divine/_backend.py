"""Picks the compiled kernels when available.

Set ``DIVINE_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

if os.environ.get("DIVINE_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as kernels

    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels

        BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as kernels

        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]
