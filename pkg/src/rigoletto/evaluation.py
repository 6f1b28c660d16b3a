"""Scoring, cross-validation and leave-one-subject-out evaluation."""
from dataclasses import dataclass, field

import numpy as np

from .classify import CSPLDA, FgMDM, StackedEnsemble
from .connectivity import canonical_order
from .errors import FoldFailure, InvalidInput
from .folds import SplitPlan, make_splits  # noqa: F401  (re-exported)
from .manifold import dist_airm
from .transfer import bundle_means, build_subject, predict_with_source, source_distances, transport_bundle


def _pair(y_true, y_pred):
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise InvalidInput(f"label vectors differ in shape: {y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise InvalidInput("cannot score empty label vectors")
    return y_true, y_pred


def accuracy(y_true, y_pred):
    y_true, y_pred = _pair(y_true, y_pred)
    return float(np.mean(y_true == y_pred))


def cohen_kappa(y_true, y_pred):
    """Chance-corrected agreement ``(p_o - p_e) / (1 - p_e)``.

    When chance agreement is certain (both vectors constant on the same
    label) the ratio is 0/0; it is reported as 1 for identical vectors and 0
    otherwise.

    Computed from integer counts as ``(n a - s) / (n^2 - s)``, with ``a`` the
    number of agreements and ``s`` the sum over labels of the product of
    marginal counts, so relabeling cannot change the result by rounding.
    """
    y_true, y_pred = _pair(y_true, y_pred)
    labels = np.union1d(y_true, y_pred)
    n = int(y_true.size)
    agree = int(np.sum(y_true == y_pred))
    s = sum(int(np.sum(y_true == c)) * int(np.sum(y_pred == c)) for c in labels)
    if s == n * n:
        return 1.0 if np.array_equal(y_true, y_pred) else 0.0
    return (n * agree - s) / (n * n - s)


def figure_threshold(values):
    """Display threshold ``min + 0.9 (max - min)`` over off-diagonal entries.

    Returns ``(th, mask)`` with ``mask = values >= th``.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.size == 0:
        raise InvalidInput("expected a non-empty matrix")
    off = ~np.eye(*values.shape, dtype=bool)
    pool = values[off] if off.any() else values.ravel()
    lo, hi = pool.min(), pool.max()
    th = float(lo + 0.9 * (hi - lo))
    return th, values >= th


@dataclass
class ScoreReport:
    pipeline: str
    kappa: list
    accuracy: list
    seed: int = 0
    config_hash: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def kappa_mean(self):
        return float(np.mean(self.kappa))

    @property
    def kappa_std(self):
        return float(np.std(self.kappa))

    @property
    def accuracy_mean(self):
        return float(np.mean(self.accuracy))

    @property
    def accuracy_std(self):
        return float(np.std(self.accuracy))

    def to_dict(self):
        out = {
            "pipeline": self.pipeline,
            "folds": {"kappa": list(self.kappa), "accuracy": list(self.accuracy)},
            "kappa_mean": self.kappa_mean,
            "kappa_std": self.kappa_std,
            "accuracy_mean": self.accuracy_mean,
            "accuracy_std": self.accuracy_std,
            "seed": self.seed,
            "config_hash": self.config_hash,
        }
        out.update(self.extra)
        return out


class _SingleEstimatorModel:
    def __init__(self, estimator, model):
        self.estimator = estimator
        self.model = model

    def predict(self, bundle):
        return self.model.predict(bundle[self.estimator])

    def predict_proba(self, bundle):
        return self.model.predict_proba(bundle[self.estimator])


class FgMDMPipeline:
    """FgMDM on a single estimator's matrices."""

    def __init__(self, estimator, metric="logeuclid", fgda_lambda=0.1):
        self.estimator = canonical_order([estimator])[0]
        self.metric = metric
        self.fgda_lambda = fgda_lambda
        self.name = f"FgMDM-{self.estimator}"
        self.estimators = (self.estimator,)

    def fit(self, bundle):
        model = FgMDM(self.metric, self.fgda_lambda).fit(bundle[self.estimator], bundle.labels)
        return _SingleEstimatorModel(self.estimator, model)


class CSPLDAPipeline:
    """CSP + LDA baseline on covariance matrices."""

    name = "CSP+LDA"
    estimators = ("Cov",)

    def __init__(self, n_filters=6):
        self.n_filters = n_filters

    def fit(self, bundle):
        n = bundle.n_channels
        m = min(self.n_filters, n - n % 2)
        model = CSPLDA(m).fit(bundle["Cov"], bundle.labels)
        return _SingleEstimatorModel("Cov", model)


class EnsemblePipeline:
    """Stacked FgMDM ensemble over several estimators."""

    name = "Ensemble"

    def __init__(self, estimators=("Cov", "Coh", "PLV"), metric="logeuclid",
                 fgda_lambda=0.1, ridge_alpha=1.0, n_folds=5, seed=0):
        self.estimators = canonical_order(estimators)
        self.params = dict(metric=metric, fgda_lambda=fgda_lambda,
                           ridge_alpha=ridge_alpha, n_folds=n_folds, seed=seed)

    def fit(self, bundle):
        return StackedEnsemble(**self.params).fit(bundle.select(self.estimators))


def _strip_labels(bundle):
    hidden = bundle.subset(np.arange(bundle.n_trials))
    hidden.labels = np.full(bundle.n_trials, -1, dtype=np.int64)
    return hidden


def cross_validate(bundle, pipeline, plan, transport=True, config_hash=""):
    """Score ``pipeline`` on every fold of ``plan``.

    Each fold fits on the training trials only. Test trials reach the fitted
    model with their labels replaced by -1 and, when ``transport`` is set,
    recentered so that each estimator's test mean coincides with its
    training mean.

    Raises
    ------
    FoldFailure
        Wrapping the first error, with the fold index in ``.fold``.
    """
    bundle = bundle.select(pipeline.estimators)
    labels = bundle.labels
    if np.any(labels < 0):
        raise InvalidInput("cross-validation needs labeled trials")
    kappas, accs = [], []
    for i, (train, test) in enumerate(plan.folds):
        try:
            tr = bundle.subset(train)
            te = _strip_labels(bundle.subset(test))
            model = pipeline.fit(tr)
            if transport:
                te = transport_bundle(te, bundle_means(tr))
            pred = model.predict(te)
            kappas.append(cohen_kappa(labels[test], pred))
            accs.append(accuracy(labels[test], pred))
        except Exception as exc:
            raise FoldFailure(i, exc) from exc
    return ScoreReport(pipeline.name, kappas, accs, plan.seed, config_hash)


@dataclass
class TransferReport:
    """Leave-one-subject-out outcome.

    ``kappa_grid[s][t]`` is the kappa of source ``s``'s model on target
    ``t``; ``distance_grid[s][t]`` the affine-invariant distance between the
    subjects' covariance means.
    """

    subject_ids: list
    reports: dict
    selected: dict
    kappa_grid: np.ndarray
    distance_grid: np.ndarray

    def to_dict(self):
        return {
            "subjects": list(self.subject_ids),
            "per_target": {t: self.reports[t].to_dict() for t in self.subject_ids},
            "selected_source": dict(self.selected),
            # diagonal (a subject decoding itself) is not evaluated: null
            "kappa_grid": {
                "rows_source_cols_target": [
                    [None if np.isnan(v) else float(v) for v in row] for row in self.kappa_grid
                ],
            },
            "distance_grid": self.distance_grid.tolist(),
        }


def leave_one_subject_out(subjects, make_model=None, seed=0, config_hash=""):
    """Hold out each subject in turn and decode it from the others.

    Parameters
    ----------
    subjects : dict
        ``subject_id -> FeatureBundle`` with labels; every bundle needs
        ``Cov`` features for the subject means.
    make_model : callable, optional
        ``bundle -> fitted StackedEnsemble``; defaults to
        ``StackedEnsemble(seed=seed).fit``.
    """
    ids = list(subjects)
    if len(ids) < 2:
        raise InvalidInput("leave-one-subject-out needs at least two subjects")
    if make_model is None:
        def make_model(b):
            return StackedEnsemble(seed=seed).fit(b)
    fitted = {s: build_subject(s, subjects[s], make_model(subjects[s])) for s in ids}
    n = len(ids)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dist[i, j] = dist[j, i] = dist_airm(fitted[ids[i]].subject_mean, fitted[ids[j]].subject_mean)
    kappa = np.full((n, n), np.nan)
    preds = {}
    for j, t in enumerate(ids):
        target = subjects[t]
        if np.any(target.labels < 0):
            raise InvalidInput(f"subject {t} has unlabeled trials")
        hidden = _strip_labels(target)
        means = bundle_means(hidden, fitted[ids[0]].model.estimators_)
        for i, s in enumerate(ids):
            if s == t:
                continue
            pred, _ = predict_with_source(hidden, fitted[s], means)
            preds[s, t] = pred
            kappa[i, j] = cohen_kappa(target.labels, pred)
    reports, selected = {}, {}
    for j, t in enumerate(ids):
        sources = [fitted[s] for s in ids if s != t]
        d = source_distances(fitted[t].subject_mean, sources)
        best = sources[int(np.argmin(d))].subject_id
        selected[t] = best
        pred = preds[best, t]
        reports[t] = ScoreReport(
            "Transfer", [cohen_kappa(subjects[t].labels, pred)],
            [accuracy(subjects[t].labels, pred)], seed, config_hash,
            extra={"selected_source": best},
        )
    return TransferReport(ids, reports, selected, kappa, dist)
