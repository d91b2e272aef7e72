"""Selects the LAP sweep backend at import.

``FOOLKIT_PURE_PYTHON=1`` forces the fallback even when the extension built.
"""
import os

from . import _lap_kernel_py

try:
    from . import _lap_kernel as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and os.environ.get("FOOLKIT_PURE_PYTHON", "") != "1":
    BACKEND = "compiled"
    sweep = _compiled.sweep
else:
    BACKEND = "python"
    sweep = _lap_kernel_py.sweep


def get_sweep(backend: str):
    if backend == "python":
        return _lap_kernel_py.sweep
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled LAP kernel is not available")
        return _compiled.sweep
    raise ValueError(f"unknown backend {backend!r}")


def compiled_available() -> bool:
    return _compiled is not None
