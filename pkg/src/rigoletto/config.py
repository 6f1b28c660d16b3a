"""Run configuration for the command-line tools.

A configuration file is a JSON object whose keys mirror :data:`DEFAULTS`;
omitted keys take their default, unknown keys are rejected. Only the fields
that change feature values enter :meth:`RunConfig.feature_hash`, so a model
and a feature archive agree whenever their features were computed the same
way.
"""
import copy
import json
from dataclasses import dataclass

from .connectivity import ESTIMATORS, FeatureConfig, canonical_order
from .errors import ConfigError, InvalidInput
from .manifold import Metric
from .serialize import digest

DEFAULTS = {
    "window_s": [3.0, 7.5],
    "band_hz": [8.0, 30.0],
    "estimators": ["Cov", "Coh", "PLV"],
    "welch": {"seg_len_s": 1.0, "overlap": 0.5, "taper": "hann"},
    "features": {"shrinkage": 0.0, "eps_rel": 1e-6, "edge_s": 0.25},
    "classifier": {
        "metric": "logeuclid",
        "ridge_alpha": 1.0,
        "fgda_lambda": 0.1,
        "csp_filters": 6,
        "stack_folds": 5,
    },
    "cv": {"k": 5, "repeats": 10},
    "seed": 42,
}

_FEATURE_KEYS = ("window_s", "band_hz", "estimators", "welch", "features")


def _merge(defaults, given, prefix=""):
    if not isinstance(given, dict):
        where = prefix.rstrip(".")
        raise ConfigError(f"{where or 'config'} must be an object", where or None)
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key {path!r}", path)
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, path + ".")
        else:
            out[key] = value
    return out


def _pair(values, key):
    try:
        lo, hi = (float(v) for v in values)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a pair of numbers", key) from None
    if not lo < hi:
        raise ConfigError(f"{key} must be increasing, got [{lo}, {hi}]", key)
    return [lo, hi]


def _number(section, key, path, kind=float, low=None, high=None, strict_low=False):
    try:
        value = kind(section[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{path} must be a {kind.__name__}", path) from None
    if isinstance(section[key], bool) or (kind is int and section[key] != value):
        raise ConfigError(f"{path} must be a {kind.__name__}", path)
    if low is not None and (value <= low if strict_low else value < low):
        raise ConfigError(f"{path} out of range: {value}", path)
    if high is not None and value > high:
        raise ConfigError(f"{path} out of range: {value}", path)
    return value


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``values`` has every key of :data:`DEFAULTS`."""

    values: dict

    @classmethod
    def from_dict(cls, given=None):
        v = _merge(DEFAULTS, given or {})
        v["window_s"] = _pair(v["window_s"], "window_s")
        v["band_hz"] = _pair(v["band_hz"], "band_hz")
        if v["window_s"][0] < 0:
            raise ConfigError("window_s must start at or after 0", "window_s")
        if v["band_hz"][0] < 0:
            raise ConfigError("band_hz must be non-negative", "band_hz")
        est = v["estimators"]
        if not isinstance(est, list) or not est:
            raise ConfigError("estimators must be a non-empty list", "estimators")
        try:
            v["estimators"] = list(canonical_order(est))
        except InvalidInput as exc:
            raise ConfigError(f"{exc}; choose from {list(ESTIMATORS)}", "estimators") from None
        w, f, c, cv = v["welch"], v["features"], v["classifier"], v["cv"]
        w["seg_len_s"] = _number(w, "seg_len_s", "welch.seg_len_s", low=0, strict_low=True)
        w["overlap"] = _number(w, "overlap", "welch.overlap", low=0, high=0.95)
        if not isinstance(w["taper"], str):
            raise ConfigError("welch.taper must be a window name", "welch.taper")
        f["shrinkage"] = _number(f, "shrinkage", "features.shrinkage", low=0, high=1)
        f["eps_rel"] = _number(f, "eps_rel", "features.eps_rel", low=0, strict_low=True)
        f["edge_s"] = _number(f, "edge_s", "features.edge_s", low=0)
        try:
            c["metric"] = Metric.parse(c["metric"]).value
        except InvalidInput as exc:
            raise ConfigError(str(exc), "classifier.metric") from None
        c["ridge_alpha"] = _number(c, "ridge_alpha", "classifier.ridge_alpha", low=0, strict_low=True)
        c["fgda_lambda"] = _number(c, "fgda_lambda", "classifier.fgda_lambda", low=0)
        c["csp_filters"] = _number(c, "csp_filters", "classifier.csp_filters", int, low=2)
        if c["csp_filters"] % 2:
            raise ConfigError("classifier.csp_filters must be even", "classifier.csp_filters")
        c["stack_folds"] = _number(c, "stack_folds", "classifier.stack_folds", int, low=2)
        cv["k"] = _number(cv, "k", "cv.k", int, low=2)
        cv["repeats"] = _number(cv, "repeats", "cv.repeats", int, low=1)
        v["seed"] = _number(v, "seed", "seed", int, low=0)
        return cls(v)

    @classmethod
    def load(cls, path=None, seed=None):
        """Read a JSON file (``None`` gives the defaults); ``seed`` overrides."""
        given = {}
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    given = json.load(fh)
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if seed is not None:
            given = dict(given, seed=seed)
        return cls.from_dict(given)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self):
        return self.values["seed"]

    @property
    def estimators(self):
        return tuple(self.values["estimators"])

    def feature_config(self):
        w, f = self.values["welch"], self.values["features"]
        return FeatureConfig(
            window_s=tuple(self.values["window_s"]),
            band_hz=tuple(self.values["band_hz"]),
            seg_len_s=w["seg_len_s"],
            overlap=w["overlap"],
            taper=w["taper"],
            shrinkage=f["shrinkage"],
            eps_rel=f["eps_rel"],
            edge_s=f["edge_s"],
        )

    def feature_section(self):
        return {k: self.values[k] for k in _FEATURE_KEYS}

    def feature_hash(self):
        """Hash of the settings that determine feature values."""
        return digest(self.feature_section())

    def to_dict(self):
        return copy.deepcopy(self.values)
