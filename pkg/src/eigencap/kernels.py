"""Kernel dispatch: compiled extension when available, numpy otherwise.

Set ``EIGENCAP_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("EIGENCAP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

circuit_states = _impl.circuit_states
circuit_probabilities = _impl.circuit_probabilities
fwht = _impl.fwht
zz_signs = _kernels_py.zz_signs

__all__ = ["BACKEND", "circuit_states", "circuit_probabilities", "fwht", "zz_signs"]
