"""Synthetic two-class motor-imagery-like epochs.

Class information is carried by two mechanisms so that every default
estimator sees it:

* band power: a 10 Hz and a 20 Hz rhythm with distinct spatial patterns swap
  amplitude between classes (covariance);
* phase coupling: a 12 Hz oscillation shared, with a fixed lag, between two
  channel groups in class 1 and drawn independently per group in class 0
  (coherence, PLV).

Subjects are obtained from one base model by mixing the sensor signals with
a subject-specific invertible matrix ``W``, which acts on covariances by
congruence ``C -> W C W^T``. With ``clone_pairs`` subjects come in pairs that
share ``W`` up to a small extra perturbation.
"""
import numpy as np
from scipy.linalg import expm

from .connectivity import EpochSet


def _narrowband(rng, shape, fs, low, high):
    """Unit-variance Gaussian noise restricted to ``[low, high]`` Hz."""
    x = rng.standard_normal(shape)
    X = np.fft.rfft(x, axis=-1)
    f = np.fft.rfftfreq(shape[-1], d=1.0 / fs)
    X[..., (f < low) | (f > high)] = 0.0
    y = np.fft.irfft(X, n=shape[-1], axis=-1)
    return y / y.std(axis=-1, keepdims=True)


def _random_mixing(rng, n, scale):
    S = rng.standard_normal((n, n))
    return expm(scale * 0.5 * (S + S.T) / np.sqrt(n))


class _BaseModel:
    def __init__(self, rng, n_channels):
        n = n_channels
        self.n = n
        idx = np.arange(n)
        # smooth spatial patterns peaking at opposite ends of the montage
        self.pattern_alpha = np.exp(-0.5 * ((idx - 0.25 * (n - 1)) / (0.15 * n)) ** 2)
        self.pattern_beta = np.exp(-0.5 * ((idx - 0.75 * (n - 1)) / (0.15 * n)) ** 2)
        half = n // 2
        self.group_a = idx[: max(half // 2, 1)]
        self.group_b = idx[half: half + max(half // 2, 1)]
        self.background = rng.standard_normal((n, n)) / np.sqrt(n) + np.eye(n)

    def trial(self, rng, label, T, fs):
        n = self.n
        jitter = np.exp(0.3 * rng.standard_normal(2))
        strong, weak = 1.8, 1.0
        amp_alpha = (weak if label == 1 else strong) * jitter[0]
        amp_beta = (strong if label == 1 else weak) * jitter[1]
        rhythms = _narrowband(rng, (2, T), fs, 9.0, 12.0)
        beta = _narrowband(rng, (1, T), fs, 18.0, 24.0)[0]
        x = np.outer(self.pattern_alpha, amp_alpha * rhythms[0])
        x += np.outer(self.pattern_beta, amp_beta * beta)

        # lagged coupling between channel groups
        coupled = _narrowband(rng, (3, T), fs, 11.0, 13.0)
        lag = int(round(fs / 12.0 / 4.0))
        drive_a = coupled[0]
        drive_b = np.roll(coupled[0], lag) if label == 1 else coupled[1]
        x[self.group_a] += 0.7 * drive_a
        x[self.group_b] += 0.7 * drive_b

        bg = _narrowband(rng, (n, T), fs, 1.0, 45.0)
        x += 0.8 * self.background @ bg
        x += 0.3 * rng.standard_normal((n, T))
        return x


def generate_subjects(n_subjects=2, trials_per_class=40, n_channels=12,
                      fs_hz=512.0, duration_s=8.0, seed=42, clone_pairs=False,
                      subject_scale=0.6, clone_scale=0.05):
    """Generate ``{subject_id: EpochSet}``, deterministic for a given seed.

    Labels are balanced and shuffled with a seeded permutation.
    With ``clone_pairs`` the subjects ``2k`` and ``2k+1`` share their mixing
    matrix up to a perturbation of relative size ``clone_scale``.
    """
    rng = np.random.default_rng(seed)
    base = _BaseModel(rng, n_channels)
    T = int(round(fs_hz * duration_s))
    names = tuple(f"C{i + 1:02d}" for i in range(n_channels))
    subjects = {}
    mixing = None
    for s in range(n_subjects):
        sub_rng = np.random.default_rng([seed, s + 1])
        if clone_pairs and s % 2 == 1:
            W = _random_mixing(sub_rng, n_channels, clone_scale) @ mixing
        else:
            mixing = _random_mixing(sub_rng, n_channels, subject_scale)
            W = mixing
        labels = np.repeat([0, 1], trials_per_class)
        labels = labels[sub_rng.permutation(labels.size)]
        data = np.stack([W @ base.trial(sub_rng, y, T, fs_hz) for y in labels])
        subjects[f"S{s + 1:02d}"] = EpochSet(data, fs_hz, names, labels)
    return subjects
