"""Select the propagation kernel at import time.

The compiled Cython kernel is used when it was built; otherwise (or when the
environment variable ``XTALK_PURE_PYTHON`` is set) the numpy fallback is used.
"""
import os

from . import _fallback

OP_SLICE, OP_KICK, OP_RECORD = 0, 1, 2

try:
    if os.environ.get("XTALK_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _kernels
except ImportError:
    _kernels = None

BACKEND = "compiled" if _kernels is not None else "python"


def get_propagate(backend=None):
    """Return the ``propagate`` callable for ``backend`` ('compiled', 'python' or None=active)."""
    backend = backend or BACKEND
    if backend == "python":
        return _fallback.propagate
    if backend == "compiled":
        if _kernels is None:
            raise ImportError("compiled kernel not available; rebuild the package")
        return _kernels.propagate
    raise ValueError(f"unknown backend {backend!r}")


def compiled_available():
    return _kernels is not None


propagate = get_propagate()
