"""The compiled and NumPy backends must agree on every kernel."""
import numpy as np
import pytest

from rigoletto import kernels
from rigoletto.connectivity import extract_features

from conftest import random_spd

BACKENDS = kernels.available_backends()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")


def run(name, fn):
    with kernels.backend(name):
        return fn()


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")


def test_backend_context_restores():
    before = kernels.BACKEND
    with kernels.backend("python"):
        assert kernels.BACKEND == "python"
    assert kernels.BACKEND == before


@pytest.mark.parametrize("name", BACKENDS)
@pytest.mark.parametrize("n", [1, 2, 5, 12, 40])
def test_eigh_reconstructs(name, n, rng):
    X = rng.standard_normal((7, n, n))
    X = X + np.swapaxes(X, -1, -2)
    w, V = run(name, lambda: kernels.eigh_batch(X))
    assert np.all(np.diff(w, axis=-1) >= 0)
    np.testing.assert_allclose(np.swapaxes(V, -1, -2) @ V, np.broadcast_to(np.eye(n), X.shape), atol=1e-12)
    np.testing.assert_allclose((V * w[..., None, :]) @ np.swapaxes(V, -1, -2), X, atol=1e-12 * n)


@pytest.mark.parametrize("name", BACKENDS)
def test_eigh_identity_and_diagonal(name):
    w, V = run(name, lambda: kernels.eigh_batch(np.eye(3)))
    np.testing.assert_array_equal(w, [1.0, 1.0, 1.0])
    np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-15)
    w, V = run(name, lambda: kernels.eigh_batch(np.diag([3.0, 1.0])))
    np.testing.assert_array_equal(w, [1.0, 3.0])
    np.testing.assert_allclose(np.abs(V), [[0.0, 1.0], [1.0, 0.0]], atol=1e-15)


@pytest.mark.parametrize("name", BACKENDS)
def test_eigh_rejects_nan(name):
    X = np.eye(3)
    X[1, 1] = np.nan
    with pytest.raises(np.linalg.LinAlgError):
        run(name, lambda: kernels.eigh_batch(X))


@pytest.mark.parametrize("name", BACKENDS)
@pytest.mark.parametrize("tiny", [2.2250738585e-313, 5e-324, 1e-300])
def test_eigh_subnormal_off_diagonal(name, tiny):
    # eps * ||A|| underflows here, so deflation must not rely on it alone
    for d in (0.0, 1.0):
        X = np.array([[0.0, tiny], [tiny, d]])
        w, V = run(name, lambda: kernels.eigh_batch(X))
        assert np.all(np.isfinite(w)) and np.all(np.isfinite(V))
        np.testing.assert_allclose(w, np.linalg.eigvalsh(X), atol=1e-290)


@needs_both
@pytest.mark.parametrize("n", [2, 6, 12, 33])
def test_backends_agree(n, rng):
    X = random_spd(rng, n, 20, cond=1e5)
    E = rng.standard_normal((n, n))
    S = X - np.mean(np.diagonal(X, axis1=-2, axis2=-1)) * np.eye(n)
    cases = {
        "eigvalsh": lambda: kernels.eigvalsh_batch(X),
        "eigh_values": lambda: kernels.eigh_batch(X)[0],
        "log": lambda: kernels.spectral_apply(X, kernels.LOG)[0],
        "exp": lambda: kernels.spectral_apply(S / n, kernels.EXP)[0],
        "pow": lambda: kernels.spectral_apply(X, kernels.POW, -0.5)[0],
        "congruence": lambda: kernels.congruence(E, X),
        "pack": lambda: kernels.pack_sym(X),
    }
    for key, fn in cases.items():
        a, b = run("python", fn), run("compiled", fn)
        scale = max(np.max(np.abs(a)), 1.0)
        assert np.max(np.abs(a - b)) <= 1e-11 * scale, key


@needs_both
def test_unpack_and_phase_locking_agree(rng):
    t = rng.standard_normal((4, 21))
    np.testing.assert_array_equal(run("python", lambda: kernels.unpack_sym(t, 6)),
                                  run("compiled", lambda: kernels.unpack_sym(t, 6)))
    U = np.exp(1j * rng.uniform(0, 2 * np.pi, (5, 300)))
    np.testing.assert_allclose(run("python", lambda: kernels.phase_locking(U)),
                               run("compiled", lambda: kernels.phase_locking(U)), atol=1e-14)


@needs_both
def test_spectral_apply_flags_domain_with_nan():
    X = np.diag([1.0, -1.0])[None]
    for name in BACKENDS:
        out, w = run(name, lambda: kernels.spectral_apply(X, kernels.LOG))
        assert np.isnan(out).any()
        np.testing.assert_array_equal(w[0], [-1.0, 1.0])


@pytest.mark.parametrize("name", BACKENDS)
def test_pack_unpack_round_trip(name, rng):
    S = rng.standard_normal((3, 5, 5))
    S = S + np.swapaxes(S, -1, -2)
    t = run(name, lambda: kernels.pack_sym(S))
    assert t.shape == (3, 15)
    np.testing.assert_allclose(np.linalg.norm(t, axis=-1), np.linalg.norm(S, axis=(-2, -1)), rtol=1e-14)
    np.testing.assert_allclose(run(name, lambda: kernels.unpack_sym(t, 5)), S, atol=1e-14)


@needs_both
def test_features_agree_across_backends(small_subjects, small_config):
    e = small_subjects["S01"]
    a = run("python", lambda: extract_features(e, ("Cov", "Coh", "PLV", "AEC"), small_config))
    b = run("compiled", lambda: extract_features(e, ("Cov", "Coh", "PLV", "AEC"), small_config))
    for est in a.estimators:
        np.testing.assert_allclose(a[est], b[est], rtol=1e-10, atol=1e-13)
