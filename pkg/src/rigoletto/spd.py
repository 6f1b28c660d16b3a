"""Dense symmetric linear algebra on (stacks of) real symmetric matrices.

All functions accept a single ``(n, n)`` array or a stack ``(..., n, n)`` and
return plain ndarrays; :class:`SpdMatrix` is the validated point type used at
module boundaries (feature bundles, fitted models).
"""
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import DegenerateInput, InvalidInput, NotSpdError, NumericOverflow

# exp() of anything above this overflows double precision
EXP_LIMIT = 700.0
_EPS = np.finfo(np.float64).eps


class EigenPair(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray


def as_symmetric(S):
    """Validate a square finite matrix (or stack) and return its symmetric part."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim < 2 or S.shape[-1] != S.shape[-2] or S.shape[-1] < 1:
        raise InvalidInput(f"expected square matrices, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise InvalidInput("matrix has non-finite entries")
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def _certified_floor(w):
    """Lower bounds on true eigenvalues given LAPACK output ``w`` (ascending).

    Backward-stable symmetric eigensolvers return eigenvalues within a small
    multiple of ``n * eps * ||A||_2`` of the truth.
    """
    n = w.shape[-1]
    err = 4.0 * n * _EPS * np.max(np.abs(w), axis=-1)
    return w[..., 0] - err


class SpdMatrix:
    """Symmetric positive-definite matrix with a certified eigenvalue floor.

    Construction fails with :class:`NotSpdError` unless every eigenvalue is
    provably positive. The wrapped array is read-only; ``np.asarray(spd)``
    returns it without copying.

    Parameters
    ----------
    values : array_like, shape (n, n)
        Matrix entries. Only the symmetric part is kept.
    floor : float, default=0.0
        Extra requirement on the certified minimum eigenvalue.
    """

    __slots__ = ("values", "min_eig_bound")

    def __init__(self, values, floor=0.0):
        if isinstance(values, SpdMatrix):
            values = values.values
        A = as_symmetric(values)
        if A.ndim != 2:
            raise InvalidInput(f"SpdMatrix wraps one matrix, got shape {A.shape}")
        bound = float(_certified_floor(kernels.eigvalsh_batch(A)))
        if not bound > max(floor, 0.0):
            raise NotSpdError(
                f"matrix is not SPD: certified min eigenvalue {bound:.3e} "
                f"(required > {max(floor, 0.0):.3e})"
            )
        A.setflags(write=False)
        self.values = A
        self.min_eig_bound = bound

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    def __repr__(self):
        return f"SpdMatrix(n={self.n}, min_eig_bound={self.min_eig_bound:.3e})"


def certify_spd(X, floor=0.0):
    """Certified eigenvalue floors for a stack; raises if any is not above ``floor``."""
    X = as_symmetric(X)
    bounds = _certified_floor(kernels.eigvalsh_batch(X))
    bad = ~(bounds > max(floor, 0.0))
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(np.atleast_1d(bad))[0])
        raise NotSpdError(
            f"matrix {idx} is not SPD: certified min eigenvalue "
            f"{np.atleast_1d(bounds)[idx]:.3e}"
        )
    return bounds


def sym_eig(S):
    """Eigendecomposition with ascending eigenvalues and orthonormal vectors."""
    w, V = kernels.eigh_batch(as_symmetric(S))
    return EigenPair(w, V)


def _spd_array(A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise InvalidInput(f"expected square matrices, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput("matrix has non-finite entries")
    return A


def _check_positive(w):
    if not np.all(w > 0):
        raise NotSpdError(
            f"matrix is not SPD (min eigenvalue {np.min(w):.3e})"
        )


def matrix_log(A):
    """Principal logarithm of SPD matrices."""
    out, w = kernels.spectral_apply(_spd_array(A), kernels.LOG)
    _check_positive(w)
    return out


def matrix_exp(S):
    """Exponential of symmetric matrices; the result is SPD."""
    out, w = kernels.spectral_apply(_spd_array(S), kernels.EXP)
    if np.max(w) > EXP_LIMIT:
        raise NumericOverflow(
            f"eigenvalue {np.max(w):.1f} exceeds {EXP_LIMIT}; exp would overflow"
        )
    return out


def matrix_power(A, p):
    """Real power ``A**p`` of SPD matrices."""
    out, w = kernels.spectral_apply(_spd_array(A), kernels.POW, float(p))
    _check_positive(w)
    return out


def sqrtm(A):
    return matrix_power(A, 0.5)


def invsqrtm(A):
    return matrix_power(A, -0.5)


def nearest_spd(S, eps=None):
    """Frobenius-nearest matrix whose eigenvalues are all at least ``eps``.

    Eigenvalues below the floor are clamped and eigenvectors are kept. The
    floor is padded by a few ulps of the spectral norm so that the result
    certifies as ``>= eps`` and a second call returns it unchanged. Matrices
    already above the floor are returned as-is.

    Parameters
    ----------
    S : array_like, shape (..., n, n)
        Symmetric matrices.
    eps : float, optional
        Eigenvalue floor. Defaults to ``1e-10 * trace(S) / n`` per matrix,
        or ``1e-10`` when the trace is not positive.
    """
    S = as_symmetric(S)
    n = S.shape[-1]
    if eps is None:
        mean_diag = np.trace(S, axis1=-2, axis2=-1) / n
        eps = np.where(mean_diag > 0, 1e-10 * mean_diag, 1e-10)
    eps = np.asarray(eps, dtype=np.float64)
    if np.any(eps <= 0):
        raise InvalidInput("eps must be positive")
    w, V = kernels.eigh_batch(S)
    # the result's spectrum reaches at least eps, so pad against that too
    scale = np.maximum(np.max(np.abs(w), axis=-1), eps)
    floor = eps + 16.0 * n * _EPS * scale
    done = _certified_floor(w) >= eps
    if np.all(done):
        return S
    clamped = np.maximum(w, floor[..., None])
    out = (V * clamped[..., None, :]) @ np.swapaxes(V, -1, -2)
    out = 0.5 * (out + np.swapaxes(out, -1, -2))
    if S.ndim == 2:
        return out
    return np.where(done[..., None, None], S, out)


def shrink_covariance(C, gamma):
    """Shrink towards the scaled identity: ``(1-gamma) C + gamma tr(C)/n I``."""
    C = as_symmetric(C)
    if not 0.0 <= gamma <= 1.0:
        raise InvalidInput(f"shrinkage must lie in [0, 1], got {gamma}")
    if gamma == 0.0:
        return C
    n = C.shape[-1]
    tr = np.trace(C, axis1=-2, axis2=-1)
    if np.any(tr <= 0):
        raise DegenerateInput("cannot shrink a matrix with non-positive trace")
    mu = (tr / n)[..., None, None]
    return (1.0 - gamma) * C + gamma * mu * np.eye(n)
