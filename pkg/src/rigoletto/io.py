"""On-disk formats: datasets, feature archives, models and reports.

Dataset layout
--------------
A dataset directory holds ``manifest.json`` and, per subject, a raw data
file and a labels file. The data file is little-endian float32, trial-major,
then channel-major, then sample, so its size is
``trials * channels * samples * 4`` bytes. The labels file has one integer
per line: 0, 1, or -1 for unknown. Manifest paths are relative to the
manifest's directory.

Feature archives are zip files written with fixed timestamps: ``meta.json``
plus one ``.npy`` member per subject and estimator, so identical features give
identical bytes. Every artifact is written to a temporary file in the target
directory and renamed into place only once complete.
"""
import io
import json
import os
import tempfile
import zipfile

import numpy as np

from .connectivity import EpochSet, FeatureBundle
from .errors import InvalidInput, IoError
from .serialize import dumps

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)
_F32 = np.dtype("<f4")


def _write_atomic(path, payload):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror}", path) from None
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise IoError(f"cannot write {path}: {exc.strerror}", path) from None


def write_text(path, text):
    _write_atomic(path, text.encode("utf-8"))


def write_json(path, obj):
    write_text(path, dumps(obj))


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror}", path) from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise IoError(f"{path} is not valid JSON: {exc}", path) from None


# -- datasets ---------------------------------------------------------------

def write_labels_text(labels):
    return "".join(f"{int(v)}\n" for v in labels)


def parse_labels(text, path=None):
    labels = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            value = int(line)
        except ValueError:
            raise IoError(f"{path}:{lineno}: label {line!r} is not an integer", path) from None
        if value not in (-1, 0, 1):
            raise IoError(f"{path}:{lineno}: label {value} not in {{-1, 0, 1}}", path)
        labels.append(value)
    return np.asarray(labels, dtype=np.int64)


def read_labels(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_labels(fh.read(), path)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror}", path) from None


def write_dataset(out_dir, subjects):
    """Write ``{subject_id: EpochSet}`` as a dataset directory.

    Data and label files go first; the manifest is written last, so a
    directory with a manifest is always complete.
    """
    out_dir = os.fspath(out_dir)
    entries = []
    for sid, e in subjects.items():
        data_file, labels_file = f"{sid}.f32", f"{sid}.labels.txt"
        _write_atomic(os.path.join(out_dir, data_file), e.data.astype(_F32).tobytes())
        write_text(os.path.join(out_dir, labels_file), write_labels_text(e.labels))
        entries.append({
            "id": sid,
            "fs_hz": float(e.fs_hz),
            "channel_names": list(e.channel_names),
            "trials": int(e.n_trials),
            "channels": int(e.n_channels),
            "samples": int(e.data.shape[2]),
            "data_file": data_file,
            "labels_file": labels_file,
        })
    manifest = {"format_version": FORMAT_VERSION, "subjects": entries}
    write_json(os.path.join(out_dir, MANIFEST), manifest)
    return manifest


def _manifest_path(path):
    path = os.fspath(path)
    return os.path.join(path, MANIFEST) if os.path.isdir(path) else path


def read_manifest(path):
    """Load and validate a manifest; ``path`` is the file or its directory.

    Raises
    ------
    IoError
        Missing or malformed manifest, missing files, or a data file whose
        size does not match ``trials * channels * samples * 4`` bytes.
    """
    mpath = _manifest_path(path)
    m = read_json(mpath)
    base = os.path.dirname(os.path.abspath(mpath))
    if not isinstance(m, dict) or m.get("format_version") != FORMAT_VERSION:
        raise IoError(f"{mpath}: unsupported manifest (format_version must be {FORMAT_VERSION})", mpath)
    subjects = m.get("subjects")
    if not isinstance(subjects, list) or not subjects:
        raise IoError(f"{mpath}: manifest lists no subjects", mpath)
    seen = set()
    required = ("id", "fs_hz", "channel_names", "trials", "samples", "data_file", "labels_file")
    for s in subjects:
        missing = [k for k in required if not isinstance(s, dict) or k not in s]
        if missing:
            raise IoError(f"{mpath}: subject entry lacks {missing}", mpath)
        if s["id"] in seen:
            raise IoError(f"{mpath}: duplicate subject id {s['id']!r}", mpath)
        seen.add(s["id"])
        channels = len(s["channel_names"])
        if s.get("channels", channels) != channels:
            raise IoError(f"{mpath}: subject {s['id']} channel count disagrees with names", mpath)
        for key in ("data_file", "labels_file"):
            f = os.path.join(base, s[key])
            if not os.path.isfile(f):
                raise IoError(f"{f}: file listed in manifest does not exist", f)
        data = os.path.join(base, s["data_file"])
        expected = int(s["trials"]) * channels * int(s["samples"]) * _F32.itemsize
        actual = os.path.getsize(data)
        if actual != expected:
            raise IoError(
                f"{data}: size {actual} bytes, expected {expected} "
                f"({s['trials']} trials x {channels} channels x {s['samples']} samples x 4)",
                data,
            )
    return m, base


def read_dataset(path):
    """Load every subject of a dataset as float64 :class:`EpochSet` objects."""
    m, base = read_manifest(path)
    out = {}
    for s in m["subjects"]:
        shape = (int(s["trials"]), len(s["channel_names"]), int(s["samples"]))
        data_path = os.path.join(base, s["data_file"])
        try:
            raw = np.fromfile(data_path, dtype=_F32)
        except OSError as exc:
            raise IoError(f"cannot read {data_path}: {exc.strerror}", data_path) from None
        if not np.all(np.isfinite(raw)):
            raise IoError(f"{data_path}: data contains non-finite samples", data_path)
        labels_path = os.path.join(base, s["labels_file"])
        labels = read_labels(labels_path)
        if labels.size != shape[0]:
            raise IoError(f"{labels_path}: {labels.size} labels for {shape[0]} trials", labels_path)
        try:
            out[s["id"]] = EpochSet(raw.reshape(shape).astype(np.float64), float(s["fs_hz"]),
                                    tuple(s["channel_names"]), labels)
        except InvalidInput as exc:
            raise IoError(f"{data_path}: {exc}", data_path) from None
    return out


# -- feature archives -------------------------------------------------------

def _npy_bytes(a):
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(a), allow_pickle=False)
    return buf.getvalue()


def write_features(path, bundles, meta):
    """Write ``{subject_id: FeatureBundle}`` plus ``meta`` to a zip archive."""
    meta = dict(meta, format_version=FORMAT_VERSION, subjects=[
        {"id": sid, "estimators": list(b.estimators),
         "floors": {k: float(v) for k, v in b.floors.items()}}
        for sid, b in bundles.items()
    ])
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        def add(name, payload):
            info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
            info.external_attr = 0o644 << 16
            zf.writestr(info, payload)

        add("meta.json", dumps(meta))
        for sid, b in bundles.items():
            add(f"{sid}/labels.npy", _npy_bytes(b.labels))
            for est in b.estimators:
                add(f"{sid}/{est}.npy", _npy_bytes(b[est]))
    _write_atomic(path, buf.getvalue())


def read_features(path):
    """Return ``(bundles, meta)`` from an archive written by :func:`write_features`."""
    path = os.fspath(path)
    try:
        zf = zipfile.ZipFile(path)
    except (OSError, zipfile.BadZipFile) as exc:
        raise IoError(f"cannot open feature archive {path}: {exc}", path) from None
    with zf:
        try:
            meta = json.loads(zf.read("meta.json"))
            if meta.get("format_version") != FORMAT_VERSION:
                raise IoError(f"{path}: unsupported feature archive version", path)
            bundles = {}
            for s in meta["subjects"]:
                sid = s["id"]
                labels = np.load(io.BytesIO(zf.read(f"{sid}/labels.npy")), allow_pickle=False)
                feats = {e: np.load(io.BytesIO(zf.read(f"{sid}/{e}.npy")), allow_pickle=False)
                         for e in s["estimators"]}
                bundles[sid] = FeatureBundle(feats, labels, dict(s["floors"]))
        except (KeyError, ValueError, zipfile.BadZipFile) as exc:
            if isinstance(exc, InvalidInput):
                raise
            raise IoError(f"{path}: malformed feature archive ({exc})", path) from None
    return bundles, meta


def is_feature_archive(path):
    return os.path.isfile(path) and zipfile.is_zipfile(path)
