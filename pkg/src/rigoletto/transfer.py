"""Cross-subject decoding by nearest Karcher mean.

Each source subject contributes a trained ensemble and the affine-invariant
mean of its covariance matrices. A target subject is decoded with the model of
the source whose mean is closest in affine-invariant distance, after its
features are recentered onto that source's training means. An
inverse-distance weighted vote over all sources is also available.
"""
from dataclasses import dataclass

import numpy as np

from .classify import StackedEnsemble
from .errors import InvalidInput
from .manifold import Metric, dist_airm, karcher_mean, mean_airm, transport_to_mean


def bundle_means(bundle, estimators=None):
    """Affine-invariant mean of every estimator's matrices."""
    estimators = bundle.estimators if estimators is None else estimators
    return {e: mean_airm(bundle[e]) for e in estimators}


def transport_bundle(bundle, reference_means, own_means=None):
    """Recenter each estimator of ``bundle`` onto ``reference_means[estimator]``.

    Estimators absent from ``reference_means`` are left untouched. The
    eigenvalue floor of each transported stack is scaled by the smallest
    squared singular value of the congruence, which bounds how far it can
    shrink.
    """
    own_means = own_means or {}
    features, floors = {}, dict(bundle.floors)
    for est in bundle.estimators:
        if est not in reference_means:
            continue
        X = bundle[est]
        mine = own_means.get(est)
        if mine is None:
            mine = mean_airm(X)
        ref = np.asarray(reference_means[est], dtype=np.float64)
        features[est] = transport_to_mean(X, ref, mine)
        if floors.get(est):
            # lambda_min(E X E^T) >= lambda_min(X) * sigma_min(E)^2 with E = ref^1/2 mine^-1/2
            ratio = np.linalg.eigvalsh(ref)[0] / np.linalg.eigvalsh(mine)[-1]
            floors[est] = 0.5 * floors[est] * min(ratio, 1.0)
    return type(bundle)({**bundle.features, **features}, bundle.labels, floors)


@dataclass
class SubjectBundle:
    """A source subject: trained ensemble plus the mean of its covariances."""

    subject_id: str
    model: StackedEnsemble
    subject_mean: np.ndarray
    metric: Metric = Metric.AIRM

    def __post_init__(self):
        self.subject_mean = np.asarray(self.subject_mean, dtype=np.float64)
        ref = self.model.reference_means_
        n = next(iter(ref.values())).shape[-1]
        if self.subject_mean.shape != (n, n):
            raise InvalidInput(
                f"subject mean of shape {self.subject_mean.shape} does not match "
                f"model dimension {n}"
            )


def subject_mean(X, metric=Metric.AIRM):
    """Karcher mean of one subject's covariance matrices."""
    return karcher_mean(X, metric)


def build_subject(subject_id, bundle, model=None, metric=Metric.AIRM):
    """Train (or adopt) an ensemble for ``bundle`` and compute the subject mean."""
    if "Cov" not in bundle.features:
        raise InvalidInput("subject means are computed from 'Cov' features")
    if model is None:
        model = StackedEnsemble().fit(bundle)
    return SubjectBundle(str(subject_id), model, subject_mean(bundle["Cov"], metric), Metric.parse(metric))


def source_distances(target_mean, sources):
    if not sources:
        raise InvalidInput("no source subject given")
    return np.array([dist_airm(target_mean, s.subject_mean) for s in sources])


def select_source(target_mean, sources):
    """Id of the source whose mean is closest to ``target_mean``; ties go to the first."""
    d = source_distances(target_mean, sources)
    return sources[int(np.argmin(d))].subject_id


def _source_by_id(sources, subject_id):
    for s in sources:
        if s.subject_id == subject_id:
            return s
    raise InvalidInput(f"unknown source {subject_id!r}")


def predict_with_source(target, source, target_means=None):
    """Recenter ``target`` onto ``source``'s training means, then predict.

    Returns ``(labels, probabilities)``.
    """
    moved = transport_bundle(target, source.model.reference_means_, target_means)
    proba = source.model.predict_proba(moved)
    labels = source.model.stacker_.predict(source.model.level1_proba(moved))
    return labels, proba


def transfer_predict(target, target_mean, sources):
    """Decode ``target`` with the ensemble of the nearest source.

    Returns ``(labels, probabilities, selected_id)``.
    """
    chosen = _source_by_id(sources, select_source(target_mean, sources))
    labels, proba = predict_with_source(target, chosen)
    return labels, proba, chosen.subject_id


def vote_weights(target_mean, sources, eps_d=1e-9):
    w = 1.0 / (source_distances(target_mean, sources) + eps_d)
    return w / w.sum()


def weighted_vote_predict(target, target_mean, sources, eps_d=1e-9):
    """Inverse-distance weighted average of every source's probabilities.

    Returns ``(labels, probabilities, weights)``; labels are the argmax
    (first class on ties).
    """
    w = vote_weights(target_mean, sources, eps_d)
    means = bundle_means(target)
    classes = sources[0].model.classes_
    proba = np.zeros((target.n_trials, classes.size))
    for wk, s in zip(w, sources):
        if not np.array_equal(s.model.classes_, classes):
            raise InvalidInput("sources disagree on the label set")
        proba += wk * predict_with_source(target, s, means)[1]
    return classes[np.argmax(proba, axis=1)], proba, w
