"""Numerical inner loops, compiled when available.

The Cython extension ``_ckernels`` is used if it was built; otherwise the
pure-Python module ``_pykernels`` is loaded. Set ``COORDGUARD_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active implementation.
"""

from __future__ import annotations

import os

from . import _pykernels as pure

if os.environ.get("COORDGUARD_PURE_PYTHON", "") not in ("", "0"):
    _impl = pure
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = pure
        BACKEND = "python"

try:
    from . import _ckernels as compiled  # type: ignore[attr-defined]
except ImportError:
    compiled = None

shaped_argmax = _impl.shaped_argmax
edit_distances = _impl.edit_distances
nearest = _impl.nearest
dykstra = _impl.dykstra

__all__ = [
    "BACKEND",
    "compiled",
    "dykstra",
    "edit_distances",
    "nearest",
    "pure",
    "shaped_argmax",
]
