import numpy as np
import pytest

from rigoletto import kernels
from rigoletto.connectivity import FeatureConfig, extract_features
from rigoletto.synth import generate_subjects


def random_spd(rng, n, m=None, cond=None):
    """Random SPD matrix (or stack of ``m``) with eigenvalues in a controlled range."""
    shape = (n, n) if m is None else (m, n, n)
    Q, _ = np.linalg.qr(rng.standard_normal(shape))
    top = np.log(cond) if cond else 2.0
    w = np.exp(rng.uniform(-top / 2, top / 2, shape[:-1]))
    A = (Q * w[..., None, :]) @ np.swapaxes(Q, -1, -2)
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def random_orthogonal(rng, n):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_subjects():
    """Two short synthetic subjects: 16 trials per class, 6 channels, 4 s."""
    return generate_subjects(2, trials_per_class=16, n_channels=6, duration_s=4.0, seed=7)


@pytest.fixture(scope="session")
def small_config():
    return FeatureConfig(window_s=(1.0, 3.5))


@pytest.fixture(scope="session")
def small_bundles(small_subjects, small_config):
    return {sid: extract_features(e, ("Cov", "Coh", "PLV"), small_config)
            for sid, e in small_subjects.items()}


# -- acceptance summary -------------------------------------------------------

ACCEPTANCE = {}


def pytest_addoption(parser):
    parser.addoption("--backend", choices=("compiled", "python"),
                     help="kernel backend for the whole run (default: compiled when built)")


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): an acceptance criterion")
    if config.getoption("--backend"):
        kernels.set_backend(config.getoption("--backend"))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    number, title = mark.args
    details = [v for k, v in item.user_properties if k == "detail"]
    ACCEPTANCE[number] = (title, "PASS" if rep.passed else "FAIL", "; ".join(details))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, verdict, details = ACCEPTANCE[number]
        line = f"{verdict} criterion {number:2d}: {title}"
        terminalreporter.write_line(line + (f" ({details})" if details else ""))
