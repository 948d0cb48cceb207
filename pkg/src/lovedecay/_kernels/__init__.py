"""Stepping kernels: compiled Cython core with a numpy fallback.

The compiled module is used when it imports; set ``LOVEDECAY_PURE=1`` to force
the fallback. ``BACKEND`` names the active implementation.
"""

import os

from . import _core_py

if os.environ.get("LOVEDECAY_PURE", "") not in ("", "0"):
    _impl = _core_py
else:
    try:
        from . import _core as _impl
    except ImportError:  # extension not built
        _impl = _core_py

BACKEND = "cython" if _impl is not _core_py else "python"

advance = _impl.advance
make_operator = _impl.make_operator
solve = _impl.solve

AUX_T, AUX_I1, AUX_I2, AUX_H1, AUX_H2, AUX_GSQ = range(6)
AUX_SIZE = 6


def backends():
    """Every importable backend module, keyed by name."""
    out = {"python": _core_py}
    try:
        from . import _core
    except ImportError:
        return out
    out["cython"] = _core
    return out
