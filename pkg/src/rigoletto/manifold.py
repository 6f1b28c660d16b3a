"""Riemannian geometry of the SPD cone.

Two metrics are supported: the affine-invariant metric (``AIRM``), whose
distance is ``||log(A^{-1/2} B A^{-1/2})||_F``, and the log-Euclidean metric,
whose distance is ``||log A - log B||_F``. Both have a Karcher (Frechet) mean;
the log-Euclidean one is closed form, the affine-invariant one is found by a
fixed-point iteration.
"""
from enum import Enum

import numpy as np

from . import kernels
from .errors import ConvergenceFailure, InvalidInput, NotSpdError
from .spd import invsqrtm, matrix_exp, matrix_log, sqrtm


class Metric(str, Enum):
    AIRM = "airm"
    LOG_EUCLIDEAN = "logeuclid"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"riemann": cls.AIRM, "le": cls.LOG_EUCLIDEAN,
                   "log-euclidean": cls.LOG_EUCLIDEAN}
        try:
            return aliases.get(str(value).lower()) or cls(str(value).lower())
        except ValueError:
            raise InvalidInput(f"unknown metric {value!r}") from None


def _as_stack(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[-1] != X.shape[-2]:
        raise InvalidInput(f"expected a stack of square matrices, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInput("matrix has non-finite entries")
    return X


def _check_pair(A, B):
    if A.shape[-1] != B.shape[-1]:
        raise InvalidInput(
            f"dimension mismatch: {A.shape[-1]} vs {B.shape[-1]}"
        )
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise InvalidInput("matrix has non-finite entries")


def dist_airm(A, B):
    """Affine-invariant distance from ``A`` to each matrix of ``B``.

    Parameters
    ----------
    A : array_like, shape (n, n)
        Reference SPD matrix.
    B : array_like, shape (n, n) or (m, n, n)
        One SPD matrix or a stack.

    Returns
    -------
    float or ndarray, shape (m,)
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    _check_pair(A, B)
    P = invsqrtm(A)
    w = kernels.eigvalsh_batch(kernels.congruence(P, B))
    if not np.all(w > 0):
        raise NotSpdError("distance requires SPD matrices")
    d = np.sqrt(np.sum(np.log(w) ** 2, axis=-1))
    return float(d) if np.ndim(d) == 0 else d


def dist_logeuclid(A, B):
    """Log-Euclidean distance from ``A`` to each matrix of ``B``."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    _check_pair(A, B)
    diff = matrix_log(B) - matrix_log(A)
    d = np.linalg.norm(diff, ord="fro", axis=(-2, -1))
    return float(d) if np.ndim(d) == 0 else d


def dist_logeuclid_from_log(logA, B):
    """Log-Euclidean distance when ``log A`` is already available."""
    return np.linalg.norm(matrix_log(B) - logA, ord="fro", axis=(-2, -1))


def distance(A, B, metric):
    metric = Metric.parse(metric)
    if metric is Metric.AIRM:
        return dist_airm(A, B)
    return dist_logeuclid(A, B)


def mean_logeuclid(X, weights=None):
    """Closed-form log-Euclidean mean ``exp(mean_i log X_i)``."""
    X = _as_stack(X)
    if X.shape[0] == 0:
        raise InvalidInput("cannot average an empty set")
    logs = matrix_log(X)
    if weights is None:
        avg = logs.mean(axis=0)
    else:
        w = np.asarray(weights, dtype=np.float64)
        avg = np.tensordot(w / w.sum(), logs, axes=1)
    return matrix_exp(avg)


def airm_gradient(M, X):
    """Riemannian gradient ``(1/N) sum_i log(M^{-1/2} X_i M^{-1/2})`` at ``M``."""
    P = invsqrtm(M)
    return matrix_log(kernels.congruence(P, _as_stack(X))).mean(axis=0)


def _step_size(w):
    """``2 / (1 + L)`` with ``L`` a bound on the Hessian of the Karcher cost.

    For a whitened matrix with log-eigenvalue spread ``2x`` the Hessian of
    its squared distance lies in ``[1, x coth x]``; averaging the upper bounds
    over the set gives ``L``. Concentrated sets get a step of 1.
    """
    lw = np.log(w)
    x = 0.5 * (lw[:, -1] - lw[:, 0])
    safe = np.maximum(x, 1e-8)
    upper = np.where(x > 1e-8, safe / np.tanh(safe), 1.0)
    return 2.0 / (1.0 + upper.mean())


def mean_airm(X, tol=1e-8, max_iter=50, init=None):
    """Affine-invariant Karcher mean by fixed-point iteration.

    Iterates ``M <- M^{1/2} exp(t G) M^{1/2}`` where ``G`` is the mean of the
    logarithms of the whitened set, starting from the arithmetic mean, until
    ``||G||_F <= tol``. The step ``t`` is 1 for tightly clustered sets and
    shrinks with the spread of the whitened matrices, which keeps the
    iteration contractive when the set holds ill-conditioned matrices.

    Raises
    ------
    ConvergenceFailure
        If the tolerance is not met after ``max_iter`` updates. The exception
        carries the last iterate and its gradient norm.
    """
    X = _as_stack(X)
    if X.shape[0] == 0:
        raise InvalidInput("cannot average an empty set")
    if tol <= 0:
        raise InvalidInput("tol must be positive")
    M = X.mean(axis=0) if init is None else np.asarray(init, dtype=np.float64)
    if X.shape[0] == 1:
        return X[0].copy()
    for _ in range(max_iter + 1):
        P = invsqrtm(M)
        logs, w = kernels.spectral_apply(kernels.congruence(P, X), kernels.LOG)
        if not np.all(w > 0):
            raise NotSpdError("Karcher mean requires SPD matrices")
        G = logs.mean(axis=0)
        crit = np.linalg.norm(G, ord="fro")
        if crit <= tol:
            return M
        R = sqrtm(M)
        M = kernels.congruence(R, matrix_exp(_step_size(w) * G))
    raise ConvergenceFailure(
        f"AIRM mean did not reach tol={tol:g} in {max_iter} iterations "
        f"(gradient norm {crit:.3e})",
        iterate=M,
        residual=crit,
    )


def karcher_mean(X, metric=Metric.AIRM, **kwargs):
    metric = Metric.parse(metric)
    if metric is Metric.AIRM:
        return mean_airm(X, **kwargs)
    return mean_logeuclid(X)


def transport_to_mean(X, mean_train, mean_test):
    """Move a set by congruence so that ``mean_test`` lands on ``mean_train``.

    Each matrix becomes ``E X E^T`` with ``E = mean_train^{1/2} mean_test^{-1/2}``.
    When both means are the same array the input is returned unchanged.
    """
    X = np.asarray(X, dtype=np.float64)
    mean_train = np.asarray(mean_train, dtype=np.float64)
    mean_test = np.asarray(mean_test, dtype=np.float64)
    _check_pair(X, mean_train)
    _check_pair(X, mean_test)
    if np.array_equal(mean_train, mean_test):
        return X.copy()
    E = sqrtm(mean_train) @ invsqrtm(mean_test)
    return kernels.congruence(E, X)


def tangent_dim(n):
    return n * (n + 1) // 2


def tangent_map(X, M):
    """Coordinates of ``log(M^{-1/2} X M^{-1/2})`` in an orthonormal basis.

    Off-diagonal entries are weighted by sqrt(2), so the Euclidean norm of the
    result equals the affine-invariant distance between ``X`` and ``M``.

    Returns
    -------
    ndarray, shape (..., n(n+1)/2)
    """
    X = np.asarray(X, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    _check_pair(X, M)
    S = matrix_log(kernels.congruence(invsqrtm(M), X))
    return kernels.pack_sym(S)


def tangent_unmap(t, M):
    """Inverse of :func:`tangent_map`."""
    t = np.asarray(t, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[-1]
    if t.shape[-1] != tangent_dim(n):
        raise InvalidInput(
            f"tangent vector has {t.shape[-1]} coordinates, "
            f"expected {tangent_dim(n)} for n={n}"
        )
    S = kernels.unpack_sym(t, n)
    return kernels.congruence(sqrtm(M), matrix_exp(S))
