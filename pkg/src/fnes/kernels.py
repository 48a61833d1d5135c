"""Kernel backend selection.

The compiled extension ``fnes._ckernels`` is used when it imports; otherwise the
NumPy fallback ``fnes._pykernels`` is used. Set ``FNES_KERNELS=python`` to force
the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("FNES_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels


def backends():
    """Return the available kernel modules keyed by name."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out


def pairwise_sum(values):
    return _impl.pairwise_sum(values)


def invert_symbols(S, threads=1):
    return _impl.invert_symbols(S, threads)


def apply_symbols(Sinv, rhs, scale=None, threads=1):
    return _impl.apply_symbols(Sinv, rhs, scale, threads)
