"""``rigoletto`` command-line interface.

Subcommands: ``synth``, ``features``, ``train``, ``predict``, ``evaluate`` and
``transfer``. Every output is written atomically and depends only on the
inputs, the configuration and the seed.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""
import argparse
import sys

import numpy as np

from . import __version__
from .classify import StackedEnsemble
from .config import RunConfig
from .connectivity import extract_features
from .errors import (ConfigError, FoldFailure, InvalidInput, IoError,
                     NumericError, RigolettoError)
from .evaluation import (CSPLDAPipeline, EnsemblePipeline, FgMDMPipeline,
                         cross_validate, leave_one_subject_out, make_splits)
from .io import (FORMAT_VERSION, is_feature_archive, read_dataset,
                 read_features, read_json, read_labels, write_dataset,
                 write_features, write_json, write_text)
from .serialize import digest
from .synth import generate_subjects
from .transfer import transport_bundle

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p, out_help):
    p.add_argument("--config", metavar="PATH", help="JSON run configuration")
    p.add_argument("--seed", type=int, metavar="INT", help="overrides the configured seed")
    p.add_argument("--out", required=True, metavar="PATH", help=out_help)


def build_parser():
    parser = _Parser(prog="rigoletto", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic two-class dataset")
    _common(p, "output dataset directory")
    p.add_argument("--subjects", type=int, default=2)
    p.add_argument("--trials-per-class", type=int, default=40)
    p.add_argument("--channels", type=int, default=12)
    p.add_argument("--fs", type=float, default=512.0, help="sampling rate in Hz")
    p.add_argument("--duration", type=float, default=8.0, help="trial length in seconds")
    p.add_argument("--clones", action="store_true",
                   help="make subjects 2k and 2k+1 near copies of each other")

    p = sub.add_parser("features", help="extract SPD features from a dataset")
    p.add_argument("dataset", help="dataset directory or manifest")
    _common(p, "output feature archive (.zip)")

    p = sub.add_parser("train", help="train the stacked ensemble on one subject")
    p.add_argument("features", help="feature archive")
    _common(p, "output model file (JSON)")
    p.add_argument("--subject", help="subject id (default: first in the archive)")
    p.add_argument("--labels", metavar="PATH", help="labels file overriding the archive's labels")

    p = sub.add_parser("predict", help="predict trials with a trained model")
    p.add_argument("model", help="model file")
    p.add_argument("features", help="feature archive")
    _common(p, "output predictions (CSV)")
    p.add_argument("--subject", help="subject id (default: first in the archive)")
    p.add_argument("--force", action="store_true", help="ignore a config hash mismatch")

    for name, text in (("evaluate", "within-subject cross-validation of all pipelines"),
                       ("transfer", "leave-one-subject-out transfer by nearest mean")):
        p = sub.add_parser(name, help=text)
        p.add_argument("data", help="dataset directory/manifest or feature archive")
        _common(p, "output report (JSON)")
        p.add_argument("--force", action="store_true", help="ignore a config hash mismatch")
    return parser


# -- helpers ----------------------------------------------------------------

def _load_bundles(path, cfg, force):
    """Feature bundles from an archive (hash checked) or computed from a dataset."""
    if is_feature_archive(path):
        bundles, meta = read_features(path)
        if meta.get("config_hash") != cfg.feature_hash() and not force:
            raise InvalidInput(
                f"{path} was built with feature config {meta.get('config_hash')}, "
                f"current config is {cfg.feature_hash()} (use --force to override)"
            )
        return bundles, meta.get("config_hash")
    subjects = read_dataset(path)
    fc = cfg.feature_config()
    return {sid: extract_features(e, cfg.estimators, fc) for sid, e in subjects.items()}, cfg.feature_hash()


def _pick_subject(bundles, subject):
    if subject is None:
        return next(iter(bundles))
    if subject not in bundles:
        raise InvalidInput(f"subject {subject!r} not in archive; available: {list(bundles)}")
    return subject


def _classifier(cfg):
    c = cfg["classifier"]
    return dict(metric=c["metric"], fgda_lambda=c["fgda_lambda"],
                ridge_alpha=c["ridge_alpha"], n_folds=c["stack_folds"])


def _pipelines(cfg, estimators):
    c = cfg["classifier"]
    out = [FgMDMPipeline(e, c["metric"], c["fgda_lambda"]) for e in estimators]
    if "Cov" in estimators:
        out.append(CSPLDAPipeline(c["csp_filters"]))
    out.append(EnsemblePipeline(estimators, seed=cfg.seed, **_classifier(cfg)))
    return out


# -- commands ---------------------------------------------------------------

def cmd_synth(args, cfg):
    for name in ("subjects", "trials_per_class", "channels"):
        if getattr(args, name) < 1:
            raise UsageError(f"--{name.replace('_', '-')} must be positive")
    if args.fs <= 0 or args.duration <= 0:
        raise UsageError("--fs and --duration must be positive")
    subjects = generate_subjects(
        n_subjects=args.subjects, trials_per_class=args.trials_per_class,
        n_channels=args.channels, fs_hz=args.fs, duration_s=args.duration,
        seed=cfg.seed, clone_pairs=args.clones,
    )
    write_dataset(args.out, subjects)


def cmd_features(args, cfg):
    subjects = read_dataset(args.dataset)
    fc = cfg.feature_config()
    bundles = {sid: extract_features(e, cfg.estimators, fc) for sid, e in subjects.items()}
    write_features(args.out, bundles, {
        "config_hash": cfg.feature_hash(),
        "feature_config": cfg.feature_section(),
    })


def cmd_train(args, cfg):
    bundles, meta = read_features(args.features)
    sid = _pick_subject(bundles, args.subject)
    bundle = bundles[sid]
    if args.labels is not None:
        labels = read_labels(args.labels)
        if labels.size != bundle.n_trials:
            raise InvalidInput(f"{labels.size} labels for {bundle.n_trials} trials")
        bundle.labels = labels
    if np.any(bundle.labels < 0):
        raise InvalidInput(f"subject {sid} has unlabeled trials; training needs every label")
    model = StackedEnsemble(seed=cfg.seed, **_classifier(cfg)).fit(bundle)
    write_json(args.out, {
        "format_version": FORMAT_VERSION,
        "kind": "StackedEnsemble",
        "seed": cfg.seed,
        "config_hash": meta.get("config_hash"),
        "classifier_hash": digest(cfg["classifier"]),
        "trained_on": sid,
        "model": model.to_dict(),
    })


def load_model(path):
    d = read_json(path)
    if not isinstance(d, dict) or d.get("format_version") != FORMAT_VERSION or d.get("kind") != "StackedEnsemble":
        raise IoError(f"{path}: not a rigoletto model file", path)
    try:
        return StackedEnsemble.from_dict(d["model"]), d
    except (KeyError, TypeError, ValueError) as exc:
        raise IoError(f"{path}: malformed model ({exc})", path) from None


def predictions_csv(labels, proba):
    """``trial_index,label,prob_0,prob_1`` rows with 6-decimal probabilities.

    ``prob_0`` is written as ``1 - prob_1`` after rounding, so each row sums to
    exactly 1 in decimal.
    """
    rows = ["trial_index,label,prob_0,prob_1"]
    for i, (y, p1) in enumerate(zip(labels, proba[:, 1])):
        p1 = round(float(p1), 6)
        rows.append(f"{i},{int(y)},{1.0 - p1:.6f},{p1:.6f}")
    return "\n".join(rows) + "\n"


def predict_bundle(model, bundle):
    """Recenter each estimator onto the model's training mean, then predict."""
    missing = [e for e in model.estimators_ if e not in bundle.estimators]
    if missing:
        raise InvalidInput(f"features lack estimators {missing} required by the model")
    moved = transport_bundle(bundle.select(model.estimators_), model.reference_means_)
    level1 = model.level1_proba(moved)
    return model.stacker_.predict(level1), model.stacker_.predict_proba(level1)


def cmd_predict(args, cfg):
    model, info = load_model(args.model)
    bundles, meta = read_features(args.features)
    if meta.get("config_hash") != info.get("config_hash") and not args.force:
        raise InvalidInput(
            f"feature config {meta.get('config_hash')} differs from the model's "
            f"{info.get('config_hash')} (use --force to override)"
        )
    sid = _pick_subject(bundles, args.subject)
    labels, proba = predict_bundle(model, bundles[sid])
    write_text(args.out, predictions_csv(labels, proba))


def cmd_evaluate(args, cfg):
    bundles, config_hash = _load_bundles(args.data, cfg, args.force)
    k, repeats = cfg["cv"]["k"], cfg["cv"]["repeats"]
    per_subject, collected = {}, {}
    for sid, bundle in bundles.items():
        estimators = tuple(e for e in cfg.estimators if e in bundle.estimators) or bundle.estimators
        plan = make_splits(bundle.n_trials, bundle.labels, k=k, repeats=repeats, seed=cfg.seed)
        reports = {}
        for pipe in _pipelines(cfg, estimators):
            r = cross_validate(bundle, pipe, plan, config_hash=config_hash)
            reports[pipe.name] = r.to_dict()
            collected.setdefault(pipe.name, []).append(r)
        per_subject[sid] = reports
    average = {
        name: {
            "kappa_mean": float(np.mean([r.kappa_mean for r in rs])),
            "kappa_std": float(np.std([r.kappa_mean for r in rs])),
            "accuracy_mean": float(np.mean([r.accuracy_mean for r in rs])),
            "accuracy_std": float(np.std([r.accuracy_mean for r in rs])),
            "subjects": len(rs),
        }
        for name, rs in collected.items()
    }
    write_json(args.out, {
        "format_version": FORMAT_VERSION,
        "report": "evaluate",
        "config_hash": config_hash,
        "seed": cfg.seed,
        "cv": {"k": k, "repeats": repeats, "stratified": True},
        "subjects": per_subject,
        "average": average,
    })


def cmd_transfer(args, cfg):
    bundles, config_hash = _load_bundles(args.data, cfg, args.force)
    if len(bundles) < 2:
        raise InvalidInput("transfer needs at least two subjects")
    params = _classifier(cfg)

    def make_model(b):
        return StackedEnsemble(seed=cfg.seed, **params).fit(b.select(cfg.estimators))

    rep = leave_one_subject_out(bundles, make_model, seed=cfg.seed, config_hash=config_hash)
    write_json(args.out, dict(rep.to_dict(), format_version=FORMAT_VERSION, report="transfer",
                              config_hash=config_hash, seed=cfg.seed))


COMMANDS = {
    "synth": cmd_synth,
    "features": cmd_features,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "transfer": cmd_transfer,
}


def exit_code(exc):
    """Map an exception onto the documented exit code."""
    if isinstance(exc, FoldFailure):
        return exit_code(exc.cause)
    if isinstance(exc, (ConfigError, UsageError)):
        return EXIT_USAGE
    if isinstance(exc, (NumericError, np.linalg.LinAlgError, FloatingPointError)):
        return EXIT_NUMERIC
    if isinstance(exc, (InvalidInput, IoError, OSError, RigolettoError)):
        return EXIT_DATA
    return None


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config, args.seed)
        COMMANDS[args.command](args, cfg)
    except Exception as exc:
        code = exit_code(exc)
        if code is None:
            raise
        print(f"rigoletto {args.command}: error: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
