"""Per-trial SPD features from raw epochs.

Five estimators are available, always handled in this canonical order:

``Cov``
    sample covariance of the band-passed window.
``Coh``
    magnitude-squared coherence, band-averaged.
``ICoh``
    magnitude of the imaginary part of coherency, band-averaged.
``PLV``
    phase locking value of Hilbert phases.
``AEC``
    Pearson correlation of Hilbert envelopes.

Functional-connectivity matrices are generally not positive-definite, so they
are projected onto the SPD cone with an eigenvalue floor before use.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import get_window

from . import kernels
from .errors import DegenerateChannelWarning, InvalidInput, NotSpdError
from .spd import SpdMatrix, as_symmetric, certify_spd, nearest_spd, shrink_covariance

ESTIMATORS = ("Cov", "Coh", "ICoh", "PLV", "AEC")


def canonical_order(estimators):
    unknown = set(estimators) - set(ESTIMATORS)
    if unknown:
        raise InvalidInput(f"unknown estimators {sorted(unknown)}; known: {ESTIMATORS}")
    return tuple(e for e in ESTIMATORS if e in set(estimators))


@dataclass
class EpochSet:
    """Labeled trials of multichannel signals.

    ``data`` has shape (trials, channels, samples); ``labels`` holds one integer
    per trial, with -1 marking an unknown label.
    """

    data: np.ndarray
    fs_hz: float
    channel_names: tuple = ()
    labels: np.ndarray = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise InvalidInput(f"epoch data must be 3-D, got shape {self.data.shape}")
        n_trials, n_channels, n_samples = self.data.shape
        if not self.fs_hz > 0:
            raise InvalidInput("sampling rate must be positive")
        if n_samples < 2:
            raise InvalidInput("epochs need at least two samples")
        if not self.channel_names:
            self.channel_names = tuple(f"ch{i}" for i in range(n_channels))
        self.channel_names = tuple(self.channel_names)
        if len(self.channel_names) != n_channels:
            raise InvalidInput(
                f"{len(self.channel_names)} channel names for {n_channels} channels"
            )
        if self.labels is None:
            self.labels = np.full(n_trials, -1, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (n_trials,):
            raise InvalidInput(f"{self.labels.size} labels for {n_trials} trials")

    @property
    def n_trials(self):
        return self.data.shape[0]

    @property
    def n_channels(self):
        return self.data.shape[1]

    @property
    def n_samples(self):
        return self.data.shape[2]

    @property
    def duration_s(self):
        return self.n_samples / self.fs_hz


@dataclass
class CrossSpectrum:
    freqs_hz: np.ndarray
    matrices: np.ndarray  # (freqs, n, n) complex Hermitian


@dataclass
class SpectralConnectivity:
    """Per-frequency connectivity values with a mask of undefined entries."""

    freqs_hz: np.ndarray
    values: np.ndarray
    flagged: np.ndarray


@dataclass
class ConnectivityMatrix:
    estimator: str
    values: np.ndarray
    band_hz: tuple
    flagged: np.ndarray = None

    def __post_init__(self):
        if self.flagged is None:
            self.flagged = np.zeros(self.values.shape, dtype=bool)


def window_epochs(e, t0_s, t1_s):
    """Restrict every trial to samples ``[floor(t0 fs), floor(t1 fs))``."""
    if not (0 <= t0_s < t1_s):
        raise InvalidInput(f"invalid window [{t0_s}, {t1_s}]")
    # tolerate round-off in t * fs
    i0 = int(np.floor(t0_s * e.fs_hz + 1e-9))
    i1 = int(np.floor(t1_s * e.fs_hz + 1e-9))
    if i1 > e.n_samples:
        raise InvalidInput(
            f"window end {t1_s} s exceeds epoch duration {e.duration_s} s"
        )
    if i1 - i0 < 2:
        raise InvalidInput(f"window [{t0_s}, {t1_s}] s holds fewer than 2 samples")
    return EpochSet(
        data=e.data[:, :, i0:i1].copy(),
        fs_hz=e.fs_hz,
        channel_names=e.channel_names,
        labels=e.labels.copy(),
    )


def sample_covariance(x):
    """Unbiased covariance of (..., channels, samples) signals."""
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[-1]
    if T < 2:
        raise InvalidInput("covariance needs at least two samples")
    xc = x - x.mean(axis=-1, keepdims=True)
    C = xc @ np.swapaxes(xc, -1, -2) / (T - 1)
    return 0.5 * (C + np.swapaxes(C, -1, -2))


def _taper(window, seg_len):
    if isinstance(window, str):
        return get_window(window, seg_len)
    w = np.asarray(window, dtype=np.float64)
    if w.shape != (seg_len,):
        raise InvalidInput(f"taper length {w.size} does not match segment {seg_len}")
    return w


def cross_spectral_density(x, fs_hz, seg_len, overlap=0.5, window="hann"):
    """Welch estimate of the cross-spectral matrix of one trial.

    Segments of ``seg_len`` samples start every ``seg_len - round(overlap *
    seg_len)`` samples; each is tapered, transformed, and the outer products
    ``X_i conj(X_j)`` are averaged. Scaling is one-sided power spectral
    density.

    Parameters
    ----------
    x : array_like, shape (channels, samples)
    fs_hz : float
    seg_len : int
    overlap : float in [0, 1)
    window : str or array_like
        Taper name understood by :func:`scipy.signal.get_window`, or samples.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInput("cross_spectral_density expects (channels, samples)")
    T = x.shape[-1]
    seg_len = int(seg_len)
    if seg_len < 2 or seg_len > T:
        raise InvalidInput(f"segment length {seg_len} invalid for {T} samples")
    if not 0.0 <= overlap < 1.0:
        raise InvalidInput("overlap must lie in [0, 1)")
    step = max(seg_len - int(round(overlap * seg_len)), 1)
    w = _taper(window, seg_len)
    starts = np.arange(0, T - seg_len + 1, step)
    segs = np.stack([x[:, s:s + seg_len] for s in starts])  # (K, n, L)
    X = np.fft.rfft(segs * w, axis=-1)  # (K, n, F)
    S = np.einsum("kif,kjf->fij", X, X.conj()) / len(starts)
    S /= fs_hz * np.sum(w ** 2)
    # one-sided: double every bin except DC and (for even lengths) Nyquist
    F = X.shape[-1]
    last = F - 1 if seg_len % 2 == 0 else F
    S[1:last] *= 2.0
    freqs = np.fft.rfftfreq(seg_len, d=1.0 / fs_hz)
    return CrossSpectrum(freqs_hz=freqs, matrices=S)


def _auto_spectra(csd):
    # a channel with no power at a frequency, relative to the strongest one
    # there, only carries rounding noise (amplitude ratio below 1e-12)
    diag = np.real(np.diagonal(csd.matrices, axis1=-2, axis2=-1))
    peak = np.max(diag, axis=-1, keepdims=True) if diag.size else diag
    dead = ~(diag > 1e-24 * np.maximum(peak, np.finfo(float).tiny))
    denom = diag[:, :, None] * diag[:, None, :]
    bad = dead[:, :, None] | dead[:, None, :]
    return denom, bad


def coherence(csd):
    """Magnitude-squared coherence ``|S_ij|^2 / (S_ii S_jj)`` per frequency.

    Entries touching a vanishing auto-spectrum are set to 0 and flagged.
    """
    denom, bad = _auto_spectra(csd)
    with np.errstate(divide="ignore", invalid="ignore"):
        coh = np.abs(csd.matrices) ** 2 / denom
    coh[bad] = 0.0
    coh = np.clip(coh, 0.0, 1.0)
    n = coh.shape[-1]
    idx = np.arange(n)
    good_diag = ~bad[:, idx, idx]
    coh[:, idx, idx] = np.where(good_diag, 1.0, 0.0)
    return SpectralConnectivity(csd.freqs_hz, 0.5 * (coh + np.swapaxes(coh, -1, -2)), bad)


def imaginary_coherence(csd):
    """Signed ``Im(S_ij) / sqrt(S_ii S_jj)`` per frequency (antisymmetric)."""
    denom, bad = _auto_spectra(csd)
    with np.errstate(divide="ignore", invalid="ignore"):
        icoh = np.imag(csd.matrices) / np.sqrt(denom)
    icoh[bad] = 0.0
    n = icoh.shape[-1]
    icoh[:, np.arange(n), np.arange(n)] = 0.0
    return SpectralConnectivity(csd.freqs_hz, icoh, bad)


def band_filter(x, fs_hz, low_hz, high_hz):
    """Zero-phase band-pass by masking FFT bins outside ``[low_hz, high_hz]``."""
    if not (0 < low_hz < high_hz < fs_hz / 2):
        raise InvalidInput(
            f"band [{low_hz}, {high_hz}] Hz invalid for fs={fs_hz} Hz"
        )
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[-1]
    X = np.fft.rfft(x, axis=-1)
    f = np.fft.rfftfreq(T, d=1.0 / fs_hz)
    X[..., (f < low_hz) | (f > high_hz)] = 0.0
    return np.fft.irfft(X, n=T, axis=-1)


def analytic_signal(x):
    """``x + i H(x)`` along the last axis, from the one-sided spectrum.

    The real part is the input itself, bit for bit.
    """
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[-1]
    if T < 4:
        raise InvalidInput("analytic signal needs at least 4 samples")
    X = np.fft.fft(x, axis=-1)
    h = np.zeros(T)
    h[0] = 1.0
    if T % 2 == 0:
        h[T // 2] = 1.0
        h[1:T // 2] = 2.0
    else:
        h[1:(T + 1) // 2] = 2.0
    z = np.fft.ifft(X * h, axis=-1)
    return x + 1j * z.imag


def _interior(z, fs_hz, edge_s):
    k = int(round(edge_s * fs_hz))
    if k == 0:
        return z
    if z.shape[-1] - 2 * k < 2:
        raise InvalidInput(
            f"trial of {z.shape[-1]} samples too short to drop {edge_s} s edges"
        )
    return z[..., k:-k]


def _hilbert_band(e, band, edge_s):
    low, high = band
    xf = band_filter(e.data, e.fs_hz, low, high)
    return _interior(analytic_signal(xf), e.fs_hz, edge_s)


def plv(e, band=(8.0, 30.0), edge_s=0.25):
    """Phase locking value ``|mean_t exp(i dphi(t))|`` for every channel pair.

    A channel with no in-band signal has no phase; its pairs are set to 0 and
    flagged.
    """
    z = _hilbert_band(e, band, edge_s)
    mag = np.abs(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        U = np.where(mag > 0, z / mag, 0.0)
    peak = np.max(mag, axis=-1)
    scale = np.max(peak, axis=-1, keepdims=True) if peak.size else peak
    dead_all = ~(peak > 1e-12 * np.maximum(scale, np.finfo(float).tiny))
    out = []
    for u, dead in zip(U, dead_all):
        P = np.clip(kernels.phase_locking(u), 0.0, 1.0)
        P = 0.5 * (P + P.T)
        flagged = dead[:, None] | dead[None, :]
        P[flagged] = 0.0
        np.fill_diagonal(P, 1.0)
        np.fill_diagonal(flagged, False)
        out.append(ConnectivityMatrix("PLV", P, tuple(band), flagged))
    return out


def aec(e, band=(8.0, 30.0), edge_s=0.25):
    """Pearson correlation of Hilbert envelopes for every channel pair.

    Pairs involving a constant envelope are set to 0 and flagged.
    """
    env = np.abs(_hilbert_band(e, band, edge_s))
    env = env - env.mean(axis=-1, keepdims=True)
    out = []
    for a in env:
        norms = np.sqrt(np.sum(a * a, axis=-1))
        scale = np.max(norms) if norms.size else 0.0
        dead = ~(norms > 1e-12 * max(scale, np.finfo(float).tiny))
        safe = np.where(dead, 1.0, norms)
        R = (a @ a.T) / np.outer(safe, safe)
        flagged = dead[:, None] | dead[None, :]
        R[flagged] = 0.0
        R = np.clip(0.5 * (R + R.T), -1.0, 1.0)
        np.fill_diagonal(R, 1.0)
        np.fill_diagonal(flagged, False)
        out.append(ConnectivityMatrix("AEC", R, tuple(band), flagged))
    return out


def band_average(freqs_hz, values, low_hz, high_hz):
    """Arithmetic mean of per-frequency matrices over ``low <= f <= high``."""
    freqs_hz = np.asarray(freqs_hz)
    sel = (freqs_hz >= low_hz) & (freqs_hz <= high_hz)
    if not np.any(sel):
        raise InvalidInput(f"no frequency bin inside [{low_hz}, {high_hz}] Hz")
    return np.asarray(values)[sel].mean(axis=0)


def _spectral_fc(e, estimator, band, seg_len, overlap, taper):
    out = []
    for x in e.data:
        csd = cross_spectral_density(x, e.fs_hz, seg_len, overlap, taper)
        if estimator == "Coh":
            fc = coherence(csd)
            vals = fc.values
        else:
            fc = imaginary_coherence(csd)
            vals = np.abs(fc.values)
        M = band_average(fc.freqs_hz, vals, *band)
        flagged = band_average(fc.freqs_hz, fc.flagged, *band) > 0
        np.fill_diagonal(M, 1.0)
        out.append(ConnectivityMatrix(estimator, M, tuple(band), flagged))
    return out


@dataclass(frozen=True)
class FeatureConfig:
    """Parameters of :func:`extract_features`.

    ``window_s`` of ``None`` means the epochs are used as given.
    """

    window_s: tuple = (3.0, 7.5)
    band_hz: tuple = (8.0, 30.0)
    seg_len_s: float = 1.0
    overlap: float = 0.5
    taper: str = "hann"
    shrinkage: float = 0.0
    eps_rel: float = 1e-6
    edge_s: float = 0.25
    # covariance is rejected beyond this condition number
    cov_floor_rel: float = 1e-10


@dataclass
class FeatureBundle:
    """Per-trial SPD matrices keyed by estimator name.

    Every stack is validated on construction: equal lengths, and each matrix
    certifies with a minimum eigenvalue above its estimator's floor.
    """

    features: dict
    labels: np.ndarray
    floors: dict = field(default_factory=dict)

    def __post_init__(self):
        order = canonical_order(self.features)
        if not order:
            raise InvalidInput("feature bundle holds no estimator")
        self.features = {k: np.asarray(self.features[k], dtype=np.float64) for k in order}
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.labels.shape[0]
        if n == 0:
            raise InvalidInput("feature bundle holds no trials")
        for k, X in self.features.items():
            if X.ndim != 3 or X.shape[0] != n or X.shape[1] != X.shape[2]:
                raise InvalidInput(
                    f"{k}: expected ({n}, c, c) matrices, got {X.shape}"
                )
            certify_spd(X, self.floors.get(k, 0.0))

    @property
    def estimators(self):
        return tuple(self.features)

    @property
    def n_trials(self):
        return self.labels.shape[0]

    @property
    def n_channels(self):
        return next(iter(self.features.values())).shape[-1]

    def __len__(self):
        return self.n_trials

    def __getitem__(self, key):
        return self.features[key]

    def subset(self, idx):
        idx = np.asarray(idx)
        return FeatureBundle(
            {k: X[idx] for k, X in self.features.items()},
            self.labels[idx],
            dict(self.floors),
        )

    def select(self, estimators):
        estimators = canonical_order(estimators)
        missing = [k for k in estimators if k not in self.features]
        if missing:
            raise InvalidInput(f"bundle lacks estimators {missing}")
        return FeatureBundle(
            {k: self.features[k] for k in estimators},
            self.labels,
            {k: v for k, v in self.floors.items() if k in estimators},
        )

    def replace(self, features):
        merged = dict(self.features)
        merged.update(features)
        return FeatureBundle(merged, self.labels, dict(self.floors))

    def matrices(self, estimator):
        return [SpdMatrix(X) for X in self.features[estimator]]


def _project_fc(mats, eps_rel):
    """Symmetrize, then clamp eigenvalues at ``eps_rel`` times the mean diagonal."""
    M = as_symmetric(np.stack(mats))
    n = M.shape[-1]
    eps = eps_rel * np.trace(M, axis1=-2, axis2=-1) / n
    return nearest_spd(M, eps), float(np.min(eps))


def extract_features(e, estimators=("Cov", "Coh", "PLV"), config=None):
    """Compute a :class:`FeatureBundle` for every trial of ``e``.

    Parameters
    ----------
    e : EpochSet
    estimators : iterable of str
        Any subset of :data:`ESTIMATORS`.
    config : FeatureConfig, optional

    Raises
    ------
    NotSpdError
        If a covariance matrix is singular or too ill-conditioned (for
        example a constant channel) after shrinkage.

    Warns
    -----
    DegenerateChannelWarning
        If any connectivity entry was undefined and set to 0.
    """
    config = config or FeatureConfig()
    order = canonical_order(estimators)
    if not order:
        raise InvalidInput("no estimator requested")
    if e.n_trials == 0:
        raise InvalidInput("epoch set holds no trials")
    if config.window_s is not None:
        e = window_epochs(e, *config.window_s)
    band = tuple(float(b) for b in config.band_hz)
    seg_len = min(int(round(config.seg_len_s * e.fs_hz)), e.n_samples)

    features, floors = {}, {}
    for est in order:
        if est == "Cov":
            xf = band_filter(e.data, e.fs_hz, *band)
            C = shrink_covariance(sample_covariance(xf), config.shrinkage)
            mean_diag = np.trace(C, axis1=-2, axis2=-1) / C.shape[-1]
            floor = config.cov_floor_rel * np.min(mean_diag) if mean_diag.size else 0.0
            try:
                certify_spd(C, floor)
            except NotSpdError as exc:
                raise NotSpdError(
                    f"covariance is not usable ({exc}); constant or collinear "
                    "channels need shrinkage > 0"
                ) from None
            features[est], floors[est] = C, floor
            continue
        if est in ("Coh", "ICoh"):
            mats = _spectral_fc(e, est, band, seg_len, config.overlap, config.taper)
        elif est == "PLV":
            mats = plv(e, band, config.edge_s)
        else:
            mats = aec(e, band, config.edge_s)
        bad = sum(bool(np.any(m.flagged)) for m in mats)
        if bad:
            warnings.warn(
                f"{est}: {bad} of {len(mats)} trials have undefined pairs "
                "(dead channel or flat envelope), set to 0",
                DegenerateChannelWarning, stacklevel=2,
            )
        features[est], floors[est] = _project_fc([m.values for m in mats], config.eps_rel)
    return FeatureBundle(features, e.labels.copy(), floors)
