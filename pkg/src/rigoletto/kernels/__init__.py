"""Hot numerical kernels with a compiled backend and a NumPy fallback.

The compiled extension (``rigoletto.kernels._ext``, built from Cython) is used
when it imports; otherwise the pure NumPy module is used. Both expose the same
functions, and :func:`set_backend` switches between them at runtime, which the
benchmark and the equivalence tests rely on.
"""
from contextlib import contextmanager

from . import _fallback

try:
    from . import _ext
except ImportError:  # extension not built
    _ext = None

LOG, EXP, POW = _fallback.LOG, _fallback.EXP, _fallback.POW

_BACKENDS = {"python": _fallback}
if _ext is not None:
    _BACKENDS["compiled"] = _ext

_impl = _ext if _ext is not None else _fallback
BACKEND = "compiled" if _ext is not None else "python"


def available_backends():
    return sorted(_BACKENDS)


def set_backend(name):
    """Select ``"python"`` or ``"compiled"``; returns the previous name."""
    global _impl, BACKEND
    if name not in _BACKENDS:
        raise ValueError(
            f"backend {name!r} unavailable; choose from {available_backends()}"
        )
    previous = BACKEND
    _impl = _BACKENDS[name]
    BACKEND = name
    return previous


@contextmanager
def backend(name):
    previous = set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def eigh_batch(X):
    return _impl.eigh_batch(X)


def eigvalsh_batch(X):
    return _impl.eigvalsh_batch(X)


def spectral_apply(X, code, p=1.0):
    return _impl.spectral_apply(X, code, p)


def congruence(E, X):
    return _impl.congruence(E, X)


def pack_sym(S):
    return _impl.pack_sym(S)


def unpack_sym(t, n):
    return _impl.unpack_sym(t, n)


def phase_locking(U):
    return _impl.phase_locking(U)
