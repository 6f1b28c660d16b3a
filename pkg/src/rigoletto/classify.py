"""Classifiers on SPD matrices and the stacked ensemble built from them.

All models follow the fit / predict / predict_proba convention, are immutable
once fitted, and round-trip through ``to_dict`` / ``from_dict`` without loss.
"""
import numpy as np
import scipy.linalg
import scipy.special

from .errors import InvalidInput, NumericFailure
from .folds import make_splits
from .manifold import (
    Metric,
    dist_airm,
    karcher_mean,
    mean_airm,
    tangent_dim,
    tangent_map,
    tangent_unmap,
)
from .serialize import decode_array, encode_array
from .spd import matrix_log


def _check_labels(X, y, min_per_class=1):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 3 or X.shape[0] != y.shape[0]:
        raise InvalidInput(
            f"{y.shape[0]} labels for matrices of shape {X.shape}"
        )
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise InvalidInput(f"need at least two classes, got {classes.tolist()}")
    if np.any(counts < min_per_class):
        raise InvalidInput(
            f"every class needs at least {min_per_class} samples, "
            f"got counts {dict(zip(classes.tolist(), counts.tolist()))}"
        )
    return X, y, classes


def softmax_neg(d):
    """Row-wise ``exp(-d) / sum exp(-d)``, shifted for stability."""
    d = np.atleast_2d(d)
    z = np.exp(-(d - d.min(axis=1, keepdims=True)))
    return z / z.sum(axis=1, keepdims=True)


class MDM:
    """Minimum distance to (Karcher) mean.

    Probabilities are the softmax of negative distances to the class means,
    so the most probable class is always the closest one. Ties go to the
    first class in sorted label order.
    """

    def __init__(self, metric=Metric.LOG_EUCLIDEAN):
        self.metric = Metric.parse(metric)

    def fit(self, X, y):
        X, y, classes = _check_labels(X, y)
        self.classes_ = classes
        self.means_ = np.stack([karcher_mean(X[y == c], self.metric) for c in classes])
        self._cache()
        return self

    def _cache(self):
        if self.metric is Metric.LOG_EUCLIDEAN:
            self._log_means = matrix_log(self.means_)

    def distances(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        if X.shape[-1] != self.means_.shape[-1]:
            raise InvalidInput(
                f"model expects {self.means_.shape[-1]} channels, got {X.shape[-1]}"
            )
        if self.metric is Metric.LOG_EUCLIDEAN:
            logX = matrix_log(X)
            diff = logX[:, None] - self._log_means[None]
            d = np.linalg.norm(diff, ord="fro", axis=(-2, -1))
        else:
            d = np.stack([np.atleast_1d(dist_airm(M, X)) for M in self.means_], axis=1)
        return d

    def predict_proba(self, X):
        return softmax_neg(self.distances(X))

    def predict(self, X):
        return self.classes_[np.argmin(self.distances(X), axis=1)]

    def to_dict(self):
        return {
            "metric": self.metric.value,
            "classes": encode_array(self.classes_),
            "means": encode_array(self.means_),
        }

    @classmethod
    def from_dict(cls, d):
        m = cls(d["metric"])
        m.classes_ = decode_array(d["classes"])
        m.means_ = decode_array(d["means"])
        m._cache()
        return m


class FGDA:
    """Fisher geodesic discriminant filtering in the tangent space.

    Tangent vectors are taken at the grand Karcher mean. The filter is the
    orthogonal projection onto the top ``K - 1`` Fisher directions, found from
    the generalized eigenproblem of between-class against regularized
    within-class scatter ``S_w + lambda tr(S_w)/d I``.
    """

    def __init__(self, metric=Metric.LOG_EUCLIDEAN, lam=0.1):
        self.metric = Metric.parse(metric)
        self.lam = float(lam)

    def fit(self, X, y):
        X, y, classes = _check_labels(X, y)
        self.base_ = karcher_mean(X, self.metric)
        T = tangent_map(X, self.base_)
        d = T.shape[1]
        mu = T.mean(axis=0)
        Sw = np.zeros((d, d))
        Sb = np.zeros((d, d))
        for c in classes:
            Tc = T[y == c]
            mc = Tc.mean(axis=0)
            D = Tc - mc
            Sw += D.T @ D
            Sb += Tc.shape[0] * np.outer(mc - mu, mc - mu)
        Sw_reg = Sw + self.lam * np.trace(Sw) / d * np.eye(d)
        try:
            w, V = scipy.linalg.eigh(Sb, Sw_reg)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericFailure(
                f"within-class scatter is singular after regularization ({exc})"
            ) from None
        W = V[:, ::-1][:, :classes.size - 1]
        P = W @ np.linalg.solve(W.T @ W, W.T)
        self.projection_ = 0.5 * (P + P.T)
        self.eigenvalues_ = w[::-1][:classes.size - 1]
        return self

    @classmethod
    def from_projection(cls, base, projection, metric=Metric.LOG_EUCLIDEAN):
        f = cls(metric)
        f.base_ = np.asarray(base, dtype=np.float64)
        f.projection_ = np.asarray(projection, dtype=np.float64)
        if f.projection_.shape != (tangent_dim(f.base_.shape[0]),) * 2:
            raise InvalidInput("projection does not match base dimension")
        return f

    def transform(self, X):
        T = tangent_map(X, self.base_)
        return tangent_unmap(T @ self.projection_, self.base_)

    def to_dict(self):
        return {
            "metric": self.metric.value,
            "lambda": self.lam,
            "base": encode_array(self.base_),
            "projection": encode_array(self.projection_),
        }

    @classmethod
    def from_dict(cls, d):
        f = cls.from_projection(decode_array(d["base"]), decode_array(d["projection"]), d["metric"])
        f.lam = d["lambda"]
        return f


class FgMDM:
    """FGDA filtering followed by MDM on the filtered matrices."""

    def __init__(self, metric=Metric.LOG_EUCLIDEAN, lam=0.1):
        self.metric = Metric.parse(metric)
        self.lam = float(lam)

    def fit(self, X, y):
        _check_labels(X, y, min_per_class=2)
        self.fgda_ = FGDA(self.metric, self.lam).fit(X, y)
        self.mdm_ = MDM(self.metric).fit(self.fgda_.transform(X), y)
        return self

    @property
    def classes_(self):
        return self.mdm_.classes_

    def transform(self, X):
        return self.fgda_.transform(X)

    def predict_proba(self, X):
        return self.mdm_.predict_proba(self.fgda_.transform(X))

    def predict(self, X):
        return self.mdm_.predict(self.fgda_.transform(X))

    def to_dict(self):
        return {"fgda": self.fgda_.to_dict(), "mdm": self.mdm_.to_dict(),
                "metric": self.metric.value, "lambda": self.lam}

    @classmethod
    def from_dict(cls, d):
        m = cls(d["metric"], d["lambda"])
        m.fgda_ = FGDA.from_dict(d["fgda"])
        m.mdm_ = MDM.from_dict(d["mdm"])
        return m


def ridge_solve(F, t, alpha):
    """Ridge weights and intercept for targets ``t`` with an unpenalized intercept.

    Solves ``(Fc^T Fc + alpha I) w = Fc^T tc`` on centered data.
    """
    F = np.asarray(F, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] != t.shape[0] or F.shape[0] < 1:
        raise InvalidInput(f"incompatible shapes {F.shape} and {t.shape}")
    if alpha < 0:
        raise InvalidInput("alpha must be non-negative")
    f_mean, t_mean = F.mean(axis=0), t.mean()
    Fc, tc = F - f_mean, t - t_mean
    A = Fc.T @ Fc + alpha * np.eye(F.shape[1])
    if alpha == 0 and np.linalg.matrix_rank(A) < A.shape[0]:
        raise NumericFailure("singular ridge system at alpha=0; use alpha > 0")
    try:
        w = np.linalg.solve(A, Fc.T @ tc)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"ridge system could not be solved ({exc})") from None
    return w, float(t_mean - f_mean @ w)


class RidgeClassifier:
    """Two-class ridge regression on targets -1 (first class) and +1.

    ``predict_proba`` reads the score as an estimate of ``2 p - 1`` and clips,
    so the label and the most probable class always agree; a zero score goes
    to the first class.

    With ``standardize`` the penalty applies to weights on unit-variance
    features, which makes ``alpha`` independent of the feature scale. The
    stored coefficients are mapped back to the original units.
    """

    def __init__(self, alpha=1.0, standardize=False):
        self.alpha = float(alpha)
        self.standardize = bool(standardize)

    def fit(self, F, y):
        y = np.asarray(y)
        classes = np.unique(y)
        if classes.size != 2:
            raise InvalidInput(f"ridge classifier needs exactly two classes, got {classes.tolist()}")
        self.classes_ = classes
        t = np.where(y == classes[1], 1.0, -1.0)
        F = np.asarray(F, dtype=np.float64)
        if F.ndim != 2 or F.shape[0] != t.shape[0]:
            raise InvalidInput(f"incompatible shapes {F.shape} and {t.shape}")
        scale = F.std(axis=0) if self.standardize else np.ones(F.shape[1])
        scale[scale == 0] = 1.0
        w, self.intercept_ = ridge_solve(F / scale, t, self.alpha)
        self.coef_ = w / scale
        return self

    def decision_function(self, F):
        F = np.atleast_2d(np.asarray(F, dtype=np.float64))
        if F.shape[1] != self.coef_.shape[0]:
            raise InvalidInput(f"expected {self.coef_.shape[0]} features, got {F.shape[1]}")
        return F @ self.coef_ + self.intercept_

    def predict(self, F):
        return np.where(self.decision_function(F) > 0, self.classes_[1], self.classes_[0])

    def predict_proba(self, F):
        p1 = np.clip(0.5 * (1.0 + self.decision_function(F)), 0.0, 1.0)
        return np.column_stack([1.0 - p1, p1])

    def to_dict(self):
        return {"alpha": self.alpha, "standardize": self.standardize,
                "classes": encode_array(self.classes_),
                "coef": encode_array(self.coef_), "intercept": self.intercept_}

    @classmethod
    def from_dict(cls, d):
        m = cls(d["alpha"], d.get("standardize", False))
        m.classes_ = decode_array(d["classes"])
        m.coef_ = decode_array(d["coef"])
        m.intercept_ = d["intercept"]
        return m


class StackedEnsemble:
    """One FgMDM per estimator, stacked by a ridge classifier.

    The ridge stacker is trained on out-of-fold level-1 probabilities: each
    training trial is scored by an FgMDM that never saw it (seeded stratified
    K-fold). The level-1 models kept for prediction are refitted on all
    training data. The AIRM mean of every estimator's training matrices is
    stored in ``reference_means_`` for recentering new data.

    Level-1 probabilities are standardized before the ridge fit. Softmax
    outputs of distance-based models sit close to 0.5 and their spread varies
    between estimators; without scaling the penalty would weight estimators by
    that spread rather than by how informative they are.

    Parameters
    ----------
    metric : Metric, default=LOG_EUCLIDEAN
    fgda_lambda : float, default=0.1
    ridge_alpha : float, default=1.0
    n_folds : int, default=5
    seed : int, default=0
    """

    def __init__(self, metric=Metric.LOG_EUCLIDEAN, fgda_lambda=0.1,
                 ridge_alpha=1.0, n_folds=5, seed=0):
        self.metric = Metric.parse(metric)
        self.fgda_lambda = float(fgda_lambda)
        self.ridge_alpha = float(ridge_alpha)
        self.n_folds = int(n_folds)
        self.seed = int(seed)

    def _fgmdm(self):
        return FgMDM(self.metric, self.fgda_lambda)

    def fit(self, bundle, y=None, plan=None):
        """Fit on a :class:`~rigoletto.connectivity.FeatureBundle`.

        ``plan`` overrides the internal stacking folds (any object whose
        ``folds`` attribute lists ``(train, test)`` pairs covering every trial
        exactly once).
        """
        y = bundle.labels if y is None else np.asarray(y)
        if np.any(y < 0):
            raise InvalidInput("training labels must be known (no -1)")
        classes, counts = np.unique(y, return_counts=True)
        if classes.size != 2:
            raise InvalidInput(f"ensemble needs exactly two classes, got {classes.tolist()}")
        if np.any(counts < 2):
            raise InvalidInput("every class needs at least two trials")
        if plan is None:
            k = int(min(self.n_folds, counts.min()))
            plan = make_splits(len(y), y, k=k, repeats=1, seed=self.seed)
        self.classes_ = classes
        self.estimators_ = bundle.estimators
        oof = np.full((len(y), 2 * len(self.estimators_)), np.nan)
        self.models_ = {}
        self.reference_means_ = {}
        for j, est in enumerate(self.estimators_):
            X = bundle[est]
            for train, test in plan.folds:
                m = self._fgmdm().fit(X[train], y[train])
                oof[test, 2 * j:2 * j + 2] = m.predict_proba(X[test])
            self.models_[est] = self._fgmdm().fit(X, y)
            self.reference_means_[est] = mean_airm(X)
        if np.isnan(oof).any():
            raise InvalidInput("stacking folds do not cover every trial")
        self.stacker_ = RidgeClassifier(self.ridge_alpha, standardize=True).fit(oof, y)
        return self

    def _check_bundle(self, bundle):
        missing = [e for e in self.estimators_ if e not in bundle.features]
        if missing:
            raise InvalidInput(f"features lack estimators {missing} required by the model")

    def level1_proba(self, bundle):
        """Concatenated level-1 probabilities in canonical estimator order."""
        self._check_bundle(bundle)
        return np.hstack([self.models_[e].predict_proba(bundle[e]) for e in self.estimators_])

    def predict_proba(self, bundle):
        return self.stacker_.predict_proba(self.level1_proba(bundle))

    def predict(self, bundle):
        return self.stacker_.predict(self.level1_proba(bundle))

    def to_dict(self):
        return {
            "metric": self.metric.value,
            "fgda_lambda": self.fgda_lambda,
            "ridge_alpha": self.ridge_alpha,
            "n_folds": self.n_folds,
            "seed": self.seed,
            "classes": encode_array(self.classes_),
            "estimators": list(self.estimators_),
            "models": {e: m.to_dict() for e, m in self.models_.items()},
            "reference_means": {e: encode_array(M) for e, M in self.reference_means_.items()},
            "stacker": self.stacker_.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        m = cls(d["metric"], d["fgda_lambda"], d["ridge_alpha"], d["n_folds"], d["seed"])
        m.classes_ = decode_array(d["classes"])
        m.estimators_ = tuple(d["estimators"])
        m.models_ = {e: FgMDM.from_dict(d["models"][e]) for e in m.estimators_}
        m.reference_means_ = {e: decode_array(d["reference_means"][e]) for e in m.estimators_}
        m.stacker_ = RidgeClassifier.from_dict(d["stacker"])
        return m


def csp_filters(C1, C2, n_filters=6):
    """Common spatial patterns from two class covariances.

    Solves ``C1 w = lambda (C1 + C2) w`` and keeps the ``n_filters / 2``
    eigenvectors at each end of the spectrum. Returns ``(W, eigenvalues)``
    with filters as columns; ``W^T (C1 + C2) W = I``.
    """
    C1 = np.asarray(C1, dtype=np.float64)
    C2 = np.asarray(C2, dtype=np.float64)
    n = C1.shape[0]
    if n_filters % 2 or n_filters < 2 or n_filters > n:
        raise InvalidInput(f"n_filters must be even and in [2, {n}], got {n_filters}")
    try:
        w, V = scipy.linalg.eigh(C1, C1 + C2)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericFailure(f"CSP eigenproblem failed ({exc})") from None
    half = n_filters // 2
    keep = np.r_[np.arange(half), np.arange(n - half, n)]
    return V[:, keep], w[keep]


class CSPLDA:
    """CSP log-variance features classified by two-class LDA."""

    def __init__(self, n_filters=6, shrinkage=1e-6):
        self.n_filters = int(n_filters)
        self.shrinkage = float(shrinkage)

    def _features(self, C):
        C = np.asarray(C, dtype=np.float64)
        if C.ndim == 2:
            C = C[None]
        var = np.einsum("ij,nik,kj->nj", self.filters_, C, self.filters_)
        return np.log(var)

    def fit(self, C, y):
        C, y, classes = _check_labels(C, y, min_per_class=2)
        if classes.size != 2:
            raise InvalidInput(f"CSP handles exactly two classes, got {classes.tolist()}")
        self.classes_ = classes
        C1 = C[y == classes[0]].mean(axis=0)
        C2 = C[y == classes[1]].mean(axis=0)
        self.filters_, self.eigenvalues_ = csp_filters(C1, C2, self.n_filters)
        f = self._features(C)
        self.feat_mean_ = f.mean(axis=0)
        self.feat_std_ = f.std(axis=0)
        self.feat_std_[self.feat_std_ == 0] = 1.0
        z = (f - self.feat_mean_) / self.feat_std_
        mu0 = z[y == classes[0]].mean(axis=0)
        mu1 = z[y == classes[1]].mean(axis=0)
        D = np.vstack([z[y == classes[0]] - mu0, z[y == classes[1]] - mu1])
        S = D.T @ D / max(len(y) - 2, 1)
        S += self.shrinkage * np.trace(S) / S.shape[0] * np.eye(S.shape[0])
        try:
            self.coef_ = np.linalg.solve(S, mu1 - mu0)
        except np.linalg.LinAlgError:
            raise NumericFailure("singular LDA covariance") from None
        n0, n1 = np.sum(y == classes[0]), np.sum(y == classes[1])
        self.intercept_ = float(-self.coef_ @ (mu0 + mu1) / 2 + np.log(n1 / n0))
        return self

    def decision_function(self, C):
        z = (self._features(C) - self.feat_mean_) / self.feat_std_
        return z @ self.coef_ + self.intercept_

    def predict_proba(self, C):
        p1 = scipy.special.expit(self.decision_function(C))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, C):
        return np.where(self.decision_function(C) > 0, self.classes_[1], self.classes_[0])

    def to_dict(self):
        return {
            "n_filters": self.n_filters,
            "shrinkage": self.shrinkage,
            "classes": encode_array(self.classes_),
            "filters": encode_array(self.filters_),
            "eigenvalues": encode_array(self.eigenvalues_),
            "feat_mean": encode_array(self.feat_mean_),
            "feat_std": encode_array(self.feat_std_),
            "coef": encode_array(self.coef_),
            "intercept": self.intercept_,
        }

    @classmethod
    def from_dict(cls, d):
        m = cls(d["n_filters"], d["shrinkage"])
        for key in ("classes", "filters", "eigenvalues", "feat_mean", "feat_std", "coef"):
            setattr(m, key + "_", decode_array(d[key]))
        m.intercept_ = d["intercept"]
        return m
