"""Backend selection for the sweep kernels.

The compiled extension is used when it was built; setting
``NATGRAD_PURE_PYTHON=1`` forces the NumPy fallback. Both expose
``inf_laplacian`` and ``relax`` with identical results.
"""

from __future__ import annotations

import os

from . import _pykernels

FD_DIRECT = _pykernels.FD_DIRECT
MONOTONE = _pykernels.MONOTONE
SCHEMES = {"fd-direct": FD_DIRECT, "monotone": MONOTONE}


def _load():
    if os.environ.get("NATGRAD_PURE_PYTHON", "") not in ("", "0"):
        return _pykernels, "python"
    try:
        from . import _ckernels
    except ImportError:
        return _pykernels, "python"
    return _ckernels, "cython"


_impl, BACKEND = _load()


def backend_module(name: str):
    """The kernel module for ``"python"`` or ``"cython"`` (ImportError if not built)."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def inf_laplacian(v, mask, h, scheme=FD_DIRECT):
    return _impl.inf_laplacian(v, mask, float(h), int(scheme))


def relax(v, mask, h0, h, cfl, scheme, count):
    return _impl.relax(v, mask, h0, float(h), float(cfl), int(scheme), int(count))
