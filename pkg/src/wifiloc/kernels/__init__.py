"""Numeric kernels with a compiled fast path and a NumPy fallback.

Two interchangeable backends expose the same functions: ``_native``
(Cython extension) and ``_numpy`` (pure NumPy, always available). The
backend is selected once at import: native when the extension built,
NumPy otherwise. ``WIFILOC_BACKEND=numpy|native`` forces a choice, and
``use_backend()`` switches at runtime (used by the benchmark script).

Matrix products are deliberately left to NumPy's BLAS in both backends;
the kernels here cover the fused elementwise and row-wise loops around
them. See ``benchmarks/bench_backends.py`` for a timing comparison.
"""

import os

from . import _numpy

try:
    from . import _native
except ImportError:
    _native = None

_PUBLIC = (
    "relu",
    "relu_backward",
    "tanh_forward",
    "tanh_backward",
    "dropout_apply",
    "dropout_backward",
    "softmax",
    "softmax_xent",
    "adam_update",
    "sq_dists",
)

BACKEND = None


def available_backends():
    """Names of the backends importable in this installation."""
    names = ["numpy"]
    if _native is not None:
        names.append("native")
    return names


def get_backend(name):
    if name == "numpy":
        return _numpy
    if name == "native":
        if _native is None:
            raise RuntimeError("native kernel backend is not built")
        return _native
    raise ValueError(f"unknown kernel backend {name!r}")


def use_backend(name):
    """Rebind the public kernel functions to the named backend."""
    global BACKEND
    mod = get_backend(name)
    for fn in _PUBLIC:
        globals()[fn] = getattr(mod, fn)
    BACKEND = name


_requested = os.environ.get("WIFILOC_BACKEND", "auto").strip().lower() or "auto"
if _requested == "auto":
    use_backend("native" if _native is not None else "numpy")
else:
    use_backend(_requested)
