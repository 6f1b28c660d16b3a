# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for stacks of small symmetric matrices.

When eigenvectors are needed, matrices up to ``SMALL_N`` are diagonalized by
Householder tridiagonalization followed by implicit QL, which measured faster
than the LAPACK drivers at these sizes. Larger matrices, and eigenvalue-only
requests, go to LAPACK ``dsyevd`` through SciPy's Cython bindings. ``spectral_apply``
fuses the reconstruction ``V f(w) V^T`` and builds only one triangle.

With OpenMP the stack is split across threads. Every matrix is processed
independently, so results do not depend on the thread count.
"""
import numpy as np
cimport cython
cimport numpy as cnp

from cython.parallel cimport parallel, prange
from libc.math cimport exp, fabs, hypot, isfinite, log, pow, sqrt, NAN
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy
from scipy.linalg.cython_lapack cimport dsyevd

cnp.import_array()

from . import _fallback

LOG, EXP, POW = 0, 1, 2

# non-finite input is rejected before LAPACK sees it, as numpy.linalg.eigh does
cdef int _NONFINITE = -100


cdef int _workspace(int n, char jobz, int* lwork, int* liwork) noexcept nogil:
    if n <= 1:
        lwork[0] = 1
        liwork[0] = 1
    elif jobz == b'V':
        lwork[0] = 1 + 6 * n + 2 * n * n
        liwork[0] = 3 + 5 * n
    else:
        lwork[0] = 2 * n + 1
        liwork[0] = 1
    return 0


cdef int _syevd(char jobz, int n, double* a, double* w, double* work,
                int lwork, int* iwork, int liwork) noexcept nogil:
    """LAPACK ``dsyevd`` on the n x n matrix at ``a``; returns its info.

    ``a`` holds a symmetric matrix, so C and Fortran order coincide. On exit
    with ``jobz='V'`` eigenvector k occupies ``a[k*n:(k+1)*n]``.
    """
    cdef char uplo = b'L'
    cdef int info = 0
    dsyevd(&jobz, &uplo, &n, a, &n, w, work, &lwork, iwork, &liwork, &info)
    return info


# matrices up to this order use the in-module tridiagonal QL solver
SMALL_N = 32
cdef int _SMALL_N = 32
cdef double _EPS = 2.220446049250313e-16
# smallest normal double; off-diagonals below it deflate even when eps * tst1 underflows
cdef double _SAFMIN = 2.2250738585072014e-308


cdef void _tred2(int n, double* V, double* d, double* e, bint vectors) noexcept nogil:
    """Householder reduction of the symmetric ``V`` (row-major) to tridiagonal form.

    On exit ``d``/``e`` hold the diagonal and subdiagonal (``e[0]`` unused)
    and, with ``vectors``, ``V`` the accumulated orthogonal transformation.
    """
    cdef int i, j, k
    cdef double scale, h, f, g, hh
    for j in range(n):
        d[j] = V[(n - 1) * n + j]
    for i in range(n - 1, 0, -1):
        scale = 0.0
        h = 0.0
        for k in range(i):
            scale = scale + fabs(d[k])
        if scale == 0.0:
            e[i] = d[i - 1]
            for j in range(i):
                d[j] = V[(i - 1) * n + j]
                V[i * n + j] = 0.0
                V[j * n + i] = 0.0
        else:
            for k in range(i):
                d[k] = d[k] / scale
                h = h + d[k] * d[k]
            f = d[i - 1]
            g = sqrt(h)
            if f > 0:
                g = -g
            e[i] = scale * g
            h = h - f * g
            d[i - 1] = f - g
            for j in range(i):
                e[j] = 0.0
            for j in range(i):
                f = d[j]
                V[j * n + i] = f
                g = e[j] + V[j * n + j] * f
                for k in range(j + 1, i):
                    g = g + V[k * n + j] * d[k]
                    e[k] = e[k] + V[k * n + j] * f
                e[j] = g
            f = 0.0
            for j in range(i):
                e[j] = e[j] / h
                f = f + e[j] * d[j]
            hh = f / (h + h)
            for j in range(i):
                e[j] = e[j] - hh * d[j]
            for j in range(i):
                f = d[j]
                g = e[j]
                for k in range(j, i):
                    V[k * n + j] = V[k * n + j] - (f * e[k] + g * d[k])
                d[j] = V[(i - 1) * n + j]
                V[i * n + j] = 0.0
        d[i] = h
    if not vectors:
        for j in range(n):
            d[j] = V[j * n + j]
        e[0] = 0.0
        return
    for i in range(n - 1):
        V[(n - 1) * n + i] = V[i * n + i]
        V[i * n + i] = 1.0
        h = d[i + 1]
        if h != 0.0:
            for k in range(i + 1):
                d[k] = V[k * n + i + 1] / h
            for j in range(i + 1):
                g = 0.0
                for k in range(i + 1):
                    g = g + V[k * n + i + 1] * V[k * n + j]
                for k in range(i + 1):
                    V[k * n + j] = V[k * n + j] - g * d[k]
        for k in range(i + 1):
            V[k * n + i + 1] = 0.0
    for j in range(n):
        d[j] = V[(n - 1) * n + j]
        V[(n - 1) * n + j] = 0.0
    V[(n - 1) * n + n - 1] = 1.0
    e[0] = 0.0


cdef int _tql2(int n, double* V, double* d, double* e, bint vectors) noexcept nogil:
    """Implicit QL on the tridiagonal ``(d, e)``; eigenvalues sorted ascending.

    Eigenvector k ends up in column k of ``V``. Returns nonzero when an
    eigenvalue fails to converge within 30 sweeps.
    """
    cdef int i, j, k, l, m, it
    cdef double f = 0.0, tst1 = 0.0
    cdef double g, p, r, dl1, h, c, c2, c3, el1, s, s2
    for i in range(1, n):
        e[i - 1] = e[i]
    e[n - 1] = 0.0
    for l in range(n):
        tst1 = max(tst1, fabs(d[l]) + fabs(e[l]))
        m = l
        while m < n - 1:
            if fabs(e[m]) <= _EPS * tst1 + _SAFMIN:
                break
            m = m + 1
        if m > l:
            it = 0
            while True:
                it = it + 1
                if it > 30:
                    return 1
                g = d[l]
                p = (d[l + 1] - g) / (2.0 * e[l])
                r = hypot(p, 1.0)
                if p < 0:
                    r = -r
                d[l] = e[l] / (p + r)
                d[l + 1] = e[l] * (p + r)
                dl1 = d[l + 1]
                h = g - d[l]
                for i in range(l + 2, n):
                    d[i] = d[i] - h
                f = f + h
                p = d[m]
                c = 1.0
                c2 = c
                c3 = c
                el1 = e[l + 1]
                s = 0.0
                s2 = 0.0
                for i in range(m - 1, l - 1, -1):
                    c3 = c2
                    c2 = c
                    s2 = s
                    g = c * e[i]
                    h = c * p
                    r = hypot(p, e[i])
                    e[i + 1] = s * r
                    s = e[i] / r
                    c = p / r
                    p = c * d[i] - s * g
                    d[i + 1] = h + s * (c * g + s * d[i])
                    if vectors:
                        for k in range(n):
                            h = V[k * n + i + 1]
                            V[k * n + i + 1] = s * V[k * n + i] + c * h
                            V[k * n + i] = c * V[k * n + i] - s * h
                p = -s * s2 * c3 * el1 * e[l] / dl1
                e[l] = s * p
                d[l] = c * p
                if fabs(e[l]) <= _EPS * tst1 + _SAFMIN:
                    break
        d[l] = d[l] + f
        e[l] = 0.0
    for i in range(n - 1):
        k = i
        p = d[i]
        for j in range(i + 1, n):
            if d[j] < p:
                k = j
                p = d[j]
        if k != i:
            d[k] = d[i]
            d[i] = p
            if vectors:
                for j in range(n):
                    p = V[j * n + i]
                    V[j * n + i] = V[j * n + k]
                    V[j * n + k] = p
    return 0


cdef int _eig(char jobz, int n, double* a, double* w, double* e, double* work,
              int lwork, int* iwork, int liwork) noexcept nogil:
    """Eigen-decompose the symmetric matrix at ``a`` in place.

    On success ``w`` holds ascending eigenvalues and, for ``jobz='V'``,
    eigenvector k is stored contiguously in ``a[k*n:(k+1)*n]``.
    """
    cdef int i, j, info
    cdef double t
    for i in range(n * n):
        if not isfinite(a[i]):
            return _NONFINITE
    if n > _SMALL_N or jobz == b'N':
        return _syevd(jobz, n, a, w, work, lwork, iwork, liwork)
    _tred2(n, a, w, e, jobz == b'V')
    info = _tql2(n, a, w, e, jobz == b'V')
    if info == 0 and jobz == b'V':
        # columns -> rows
        for i in range(n):
            for j in range(i + 1, n):
                t = a[i * n + j]
                a[i * n + j] = a[j * n + i]
                a[j * n + i] = t
    return info


cdef inline double _apply(int code, double x, double p) noexcept nogil:
    if code == 0:
        return log(x) if x > 0 else NAN
    elif code == 1:
        return exp(x)
    if x > 0:
        return pow(x, p)
    return pow(x, p) if x == 0 else NAN


@cython.wraparound(True)
def _as_stack(X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim < 2 or X.shape[-1] != X.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {X.shape}")
    return X, X.shape[:-2], X.reshape((-1,) + X.shape[-2:])


def eigh_batch(X):
    X, lead, stack = _as_stack(X)
    cdef double[:, :, ::1] A = stack
    cdef Py_ssize_t m = A.shape[0]
    cdef int n = <int> A.shape[1]
    w_out = np.empty((m, n))
    V_out = np.empty((m, n, n))
    cdef double[:, ::1] W = w_out
    cdef double[:, :, ::1] V = V_out
    cdef int lwork, liwork, failed = 0
    _workspace(n, b'V', &lwork, &liwork)
    cdef Py_ssize_t k
    cdef int i, j, info
    cdef double* a
    cdef double* e
    cdef double* work
    cdef int* iwork
    with nogil, parallel():
        a = <double*> malloc(n * n * sizeof(double))
        e = <double*> malloc(n * sizeof(double))
        work = <double*> malloc(lwork * sizeof(double))
        iwork = <int*> malloc(liwork * sizeof(int))
        for k in prange(m, schedule="static"):
            memcpy(a, &A[k, 0, 0], n * n * sizeof(double))
            info = _eig(b'V', n, a, &W[k, 0], e, work, lwork, iwork, liwork)
            if info != 0:
                failed = 1
            for i in range(n):
                for j in range(n):
                    V[k, i, j] = a[j * n + i]
        free(a)
        free(e)
        free(work)
        free(iwork)
    if failed:
        raise np.linalg.LinAlgError("eigenvalues did not converge (non-finite input?)")
    return w_out.reshape(lead + (n,)), V_out.reshape(lead + (n, n))


def eigvalsh_batch(X):
    X, lead, stack = _as_stack(X)
    cdef double[:, :, ::1] A = stack
    cdef Py_ssize_t m = A.shape[0]
    cdef int n = <int> A.shape[1]
    w_out = np.empty((m, n))
    cdef double[:, ::1] W = w_out
    cdef int lwork, liwork, failed = 0
    _workspace(n, b'N', &lwork, &liwork)
    cdef Py_ssize_t k
    cdef int info
    cdef double* a
    cdef double* e
    cdef double* work
    cdef int* iwork
    with nogil, parallel():
        a = <double*> malloc(n * n * sizeof(double))
        e = <double*> malloc(n * sizeof(double))
        work = <double*> malloc(lwork * sizeof(double))
        iwork = <int*> malloc(liwork * sizeof(int))
        for k in prange(m, schedule="static"):
            memcpy(a, &A[k, 0, 0], n * n * sizeof(double))
            info = _eig(b'N', n, a, &W[k, 0], e, work, lwork, iwork, liwork)
            if info != 0:
                failed = 1
        free(a)
        free(e)
        free(work)
        free(iwork)
    if failed:
        raise np.linalg.LinAlgError("eigenvalues did not converge (non-finite input?)")
    return w_out.reshape(lead + (n,))


def spectral_apply(X, int code, double p=1.0):
    """Return ``(V f(w) V^T, w)`` for every matrix of the stack."""
    if code not in (0, 1, 2):
        raise ValueError(f"unknown spectral code {code}")
    X, lead, stack = _as_stack(X)
    cdef double[:, :, ::1] A = stack
    cdef Py_ssize_t m = A.shape[0]
    cdef int n = <int> A.shape[1]
    w_out = np.empty((m, n))
    out = np.empty((m, n, n))
    cdef double[:, ::1] W = w_out
    cdef double[:, :, ::1] O = out
    cdef int lwork, liwork, failed = 0
    _workspace(n, b'V', &lwork, &liwork)
    cdef Py_ssize_t k
    cdef int i, j, q, info
    cdef double s
    cdef double* a
    cdef double* e
    cdef double* fw
    cdef double* work
    cdef int* iwork
    with nogil, parallel():
        a = <double*> malloc(n * n * sizeof(double))
        e = <double*> malloc(n * sizeof(double))
        fw = <double*> malloc(n * sizeof(double))
        work = <double*> malloc(lwork * sizeof(double))
        iwork = <int*> malloc(liwork * sizeof(int))
        for k in prange(m, schedule="static"):
            memcpy(a, &A[k, 0, 0], n * n * sizeof(double))
            info = _eig(b'V', n, a, &W[k, 0], e, work, lwork, iwork, liwork)
            if info != 0:
                failed = 1
            for q in range(n):
                fw[q] = _apply(code, W[k, q], p)
            for i in range(n):
                for j in range(i, n):
                    s = 0.0
                    for q in range(n):
                        s = s + fw[q] * a[q * n + i] * a[q * n + j]
                    O[k, i, j] = s
                    O[k, j, i] = s
        free(a)
        free(e)
        free(fw)
        free(work)
        free(iwork)
    if failed:
        raise np.linalg.LinAlgError("eigenvalues did not converge (non-finite input?)")
    return out.reshape(lead + (n, n)), w_out.reshape(lead + (n,))


def congruence(E, X):
    """Return ``E X E^T`` for every matrix of the stack.

    Batched GEMM already runs at BLAS speed; a hand-written loop measured
    slower, so this shares the NumPy implementation.
    """
    return _fallback.congruence(E, X)


def pack_sym(S):
    S, lead, stack = _as_stack(S)
    cdef double[:, :, ::1] A = stack
    cdef Py_ssize_t m = A.shape[0]
    cdef int n = <int> A.shape[1]
    cdef int d = n * (n + 1) // 2
    out = np.empty((m, d))
    cdef double[:, ::1] O = out
    cdef double r2 = sqrt(2.0)
    cdef Py_ssize_t k
    cdef int i, j, c
    for k in range(m):
        c = 0
        for i in range(n):
            O[k, c] = A[k, i, i]
            c += 1
            for j in range(i + 1, n):
                O[k, c] = r2 * A[k, i, j]
                c += 1
    return out.reshape(lead + (d,))


@cython.wraparound(True)
def unpack_sym(t, int n):
    t = np.ascontiguousarray(t, dtype=np.float64)
    lead = t.shape[:-1]
    cdef int d = n * (n + 1) // 2
    if t.shape[-1] != d:
        raise ValueError(f"expected {d} coordinates, got {t.shape[-1]}")
    cdef double[:, ::1] T = t.reshape(-1, d)
    cdef Py_ssize_t m = T.shape[0]
    out = np.empty((m, n, n))
    cdef double[:, :, ::1] O = out
    cdef double ir2 = 1.0 / sqrt(2.0)
    cdef Py_ssize_t k
    cdef int i, j, c
    cdef double v
    for k in range(m):
        c = 0
        for i in range(n):
            O[k, i, i] = T[k, c]
            c += 1
            for j in range(i + 1, n):
                v = T[k, c] * ir2
                O[k, i, j] = v
                O[k, j, i] = v
                c += 1
    return out.reshape(lead + (n, n))


@cython.wraparound(True)
def phase_locking(U):
    """|U U^H| / T; a single complex GEMM, shared with the NumPy backend."""
    return _fallback.phase_locking(U)
