"""Hot kernels, compiled when available.

Set ``SURFNS_PURE_PYTHON=1`` to force the numpy fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("SURFNS_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

cut_tetrahedra = _impl.cut_tetrahedra
weighted_gram = _impl.weighted_gram


def backend_module(name: str):
    """Return the kernel module for ``"python"`` or ``"cython"`` (for tests and benchmarks)."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(name)
