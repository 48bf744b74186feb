"""Kernel backend selection.

The compiled Cython kernel is used when importable; otherwise, or when the
environment variable ``DOUBLEWELL_PURE_PYTHON`` is set to a non-empty value
other than ``0``, the pure-Python kernel is used. Both share one signature.
"""
import os

from . import _kernels_py

_force_python = os.environ.get("DOUBLEWELL_PURE_PYTHON", "") not in ("", "0")

if _force_python:
    integrate = _kernels_py.integrate
    NAME = "python"
else:
    try:
        from ._kernels import integrate
        NAME = "cython"
    except ImportError:  # extension not built
        integrate = _kernels_py.integrate
        NAME = "python"

BACKENDS = {"python": _kernels_py.integrate}
try:
    from ._kernels import integrate as _compiled
    BACKENDS["cython"] = _compiled
except ImportError:
    pass


def get(name=None):
    """Return the kernel named ``name`` (``"cython"`` or ``"python"``), default the active one."""
    if name is None:
        return integrate
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
