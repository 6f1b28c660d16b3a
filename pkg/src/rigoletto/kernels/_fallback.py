"""Pure NumPy implementations of the hot kernels.

Every function here has a twin in the compiled ``_ext`` module with the same
signature; :mod:`rigoletto.kernels` picks one at import time.
"""
import numpy as np

# spectral function codes shared with the compiled backend
LOG, EXP, POW = 0, 1, 2


def _finite(X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    # LAPACK may return garbage instead of failing on nan input
    if not np.all(np.isfinite(X)):
        raise np.linalg.LinAlgError("eigenvalues did not converge (non-finite input?)")
    return X


def eigh_batch(X):
    return np.linalg.eigh(_finite(X))


def eigvalsh_batch(X):
    return np.linalg.eigvalsh(_finite(X))


def spectral_apply(X, code, p=1.0):
    """Return ``(V f(w) V^T, w)`` for a stack of symmetric matrices.

    The eigenvalues are returned so callers can validate the domain of ``f``;
    entries where ``f`` is undefined come back as nan and are not an error
    here.
    """
    w, V = eigh_batch(X)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        if code == LOG:
            fw = np.log(w)
        elif code == EXP:
            fw = np.exp(w)
        elif code == POW:
            fw = w ** p
        else:
            raise ValueError(f"unknown spectral code {code}")
        out = (V * fw[..., None, :]) @ np.swapaxes(V, -1, -2)
        return 0.5 * (out + np.swapaxes(out, -1, -2)), w


def congruence(E, X):
    """Return ``E X E^T`` for a stack ``X``."""
    out = E @ X @ E.T
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def pack_sym(S):
    """Upper triangle, row-major, off-diagonal scaled by sqrt(2)."""
    S = np.asarray(S, dtype=np.float64)
    n = S.shape[-1]
    iu, ju = np.triu_indices(n)
    coef = np.where(iu == ju, 1.0, np.sqrt(2.0))
    return S[..., iu, ju] * coef


def unpack_sym(t, n):
    t = np.asarray(t, dtype=np.float64)
    iu, ju = np.triu_indices(n)
    coef = np.where(iu == ju, 1.0, 1.0 / np.sqrt(2.0))
    S = np.zeros(t.shape[:-1] + (n, n))
    vals = t * coef
    S[..., iu, ju] = vals
    S[..., ju, iu] = vals
    return S


def phase_locking(U):
    """|U U^H| / T for unit phasors ``U`` of shape (channels, samples)."""
    T = U.shape[-1]
    return np.abs(U @ U.conj().T) / T
