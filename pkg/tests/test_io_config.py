import json
import os
import zipfile

import numpy as np
import pytest

from rigoletto.config import DEFAULTS, RunConfig
from rigoletto.connectivity import EpochSet, FeatureBundle
from rigoletto.errors import ConfigError, IoError
from rigoletto.io import (
    parse_labels,
    read_dataset,
    read_features,
    read_manifest,
    write_dataset,
    write_features,
)
from rigoletto.serialize import decode_array, digest, dumps, encode_array


def tiny_subjects(rng):
    return {
        "A": EpochSet(rng.standard_normal((3, 2, 16)), 64.0, ("Fz", "Cz"), [0, 1, -1]),
        "B": EpochSet(rng.standard_normal((2, 2, 16)), 64.0, ("Fz", "Cz"), [1, 0]),
    }


# -- serialization -------------------------------------------------------------

def test_encode_decode_is_lossless(rng):
    a = rng.standard_normal((3, 4)) * 10.0 ** rng.integers(-300, 300, (3, 4))
    b = decode_array(json.loads(json.dumps(encode_array(a))))
    assert b.tobytes() == a.tobytes()
    i = decode_array(encode_array(np.array([1, -1, 0])))
    assert i.dtype == np.int64 and i.tolist() == [1, -1, 0]


def test_dumps_is_canonical():
    assert dumps({"b": 1, "a": [1.5]}) == dumps({"a": [1.5], "b": 1})
    assert digest({"x": 1, "y": 2}) == digest({"y": 2, "x": 1})
    with pytest.raises(ValueError):
        dumps({"x": float("nan")})


# -- datasets --------------------------------------------------------------------

def test_dataset_round_trip(tmp_path, rng):
    subjects = tiny_subjects(rng)
    write_dataset(tmp_path, subjects)
    assert sorted(os.listdir(tmp_path)) == ["A.f32", "A.labels.txt", "B.f32", "B.labels.txt", "manifest.json"]
    assert os.path.getsize(tmp_path / "A.f32") == 3 * 2 * 16 * 4
    back = read_dataset(tmp_path)
    for sid, e in subjects.items():
        np.testing.assert_array_equal(back[sid].data, e.data.astype(np.float32))
        np.testing.assert_array_equal(back[sid].labels, e.labels)
        assert back[sid].channel_names == e.channel_names and back[sid].fs_hz == 64.0
    assert read_dataset(tmp_path / "manifest.json").keys() == subjects.keys()


def _manifest(path):
    with open(path / "manifest.json") as fh:
        return json.load(fh)


def _rewrite(path, m):
    with open(path / "manifest.json", "w") as fh:
        json.dump(m, fh)


@pytest.mark.parametrize("corrupt, message", [
    (lambda m, p: m.update(format_version=9), "format_version"),
    (lambda m, p: m.update(subjects=[]), "no subjects"),
    (lambda m, p: m["subjects"][0].pop("fs_hz"), "lacks"),
    (lambda m, p: m["subjects"].append(dict(m["subjects"][0])), "duplicate"),
    (lambda m, p: m["subjects"][0].update(data_file="gone.f32"), "does not exist"),
    (lambda m, p: m["subjects"][0].update(trials=4), "expected"),
    (lambda m, p: m["subjects"][0].update(channels=3), "channel count"),
    (lambda m, p: open(p / "A.f32", "ab").write(b"\0"), "size"),
])
def test_manifest_errors(tmp_path, rng, corrupt, message):
    write_dataset(tmp_path, tiny_subjects(rng))
    m = _manifest(tmp_path)
    corrupt(m, tmp_path)
    _rewrite(tmp_path, m)
    with pytest.raises(IoError, match=message) as info:
        read_manifest(tmp_path)
    assert info.value.path


def test_unreadable_manifest(tmp_path):
    with pytest.raises(IoError):
        read_manifest(tmp_path)
    (tmp_path / "manifest.json").write_text("{not json")
    with pytest.raises(IoError, match="not valid JSON"):
        read_manifest(tmp_path)


def test_dataset_content_errors(tmp_path, rng):
    write_dataset(tmp_path, tiny_subjects(rng))
    (tmp_path / "B.labels.txt").write_text("1\n")
    with pytest.raises(IoError, match="1 labels for 2 trials"):
        read_dataset(tmp_path)
    (tmp_path / "B.labels.txt").write_text("1\n0\n")
    raw = np.fromfile(tmp_path / "A.f32", dtype="<f4")
    raw[5] = np.nan
    raw.tofile(tmp_path / "A.f32")
    with pytest.raises(IoError, match="non-finite"):
        read_dataset(tmp_path)


def test_parse_labels():
    assert parse_labels("0\n1\n\n-1\n").tolist() == [0, 1, -1]
    with pytest.raises(IoError, match="not in"):
        parse_labels("0\n2\n")
    with pytest.raises(IoError, match="not an integer"):
        parse_labels("0\nleft\n")


# -- feature archives -----------------------------------------------------------

def test_feature_archive_round_trip_and_bytes(tmp_path, small_bundles):
    meta = {"config_hash": "abc"}
    write_features(tmp_path / "a.zip", small_bundles, meta)
    write_features(tmp_path / "b.zip", small_bundles, meta)
    assert (tmp_path / "a.zip").read_bytes() == (tmp_path / "b.zip").read_bytes()
    back, m = read_features(tmp_path / "a.zip")
    assert m["config_hash"] == "abc" and m["format_version"] == 1
    for sid, b in small_bundles.items():
        assert back[sid].estimators == b.estimators
        for est in b.estimators:
            assert back[sid][est].tobytes() == b[est].tobytes()
        np.testing.assert_array_equal(back[sid].labels, b.labels)
    assert [f for f in os.listdir(tmp_path) if f.startswith(".tmp")] == []


def test_malformed_feature_archive(tmp_path):
    (tmp_path / "x.zip").write_bytes(b"not a zip")
    with pytest.raises(IoError):
        read_features(tmp_path / "x.zip")
    with zipfile.ZipFile(tmp_path / "y.zip", "w") as zf:
        zf.writestr("meta.json", json.dumps({"format_version": 1, "subjects": [{"id": "A", "estimators": ["Cov"], "floors": {}}]}))
    with pytest.raises(IoError, match="malformed"):
        read_features(tmp_path / "y.zip")


def test_write_into_missing_parent_is_created(tmp_path):
    b = FeatureBundle({"Cov": np.stack([np.eye(2)] * 2)}, [0, 1])
    write_features(tmp_path / "deep" / "f.zip", {"A": b}, {})
    assert (tmp_path / "deep" / "f.zip").exists()


# -- configuration ----------------------------------------------------------------

def test_defaults():
    cfg = RunConfig.load()
    assert cfg.values == RunConfig.from_dict(DEFAULTS).values
    assert cfg.seed == 42 and cfg.estimators == ("Cov", "Coh", "PLV")
    fc = cfg.feature_config()
    assert fc.window_s == (3.0, 7.5) and fc.band_hz == (8.0, 30.0) and fc.taper == "hann"


@pytest.mark.parametrize("given, key", [
    ({"colour": 1}, "colour"),
    ({"welch": {"segment": 1}}, "welch.segment"),
    ({"window_s": [5, 2]}, "window_s"),
    ({"band_hz": "alpha"}, "band_hz"),
    ({"estimators": ["Cov", "Granger"]}, "estimators"),
    ({"estimators": []}, "estimators"),
    ({"welch": {"overlap": 1.5}}, "welch.overlap"),
    ({"classifier": {"metric": "euclid"}}, "classifier.metric"),
    ({"classifier": {"csp_filters": 5}}, "classifier.csp_filters"),
    ({"classifier": {"ridge_alpha": 0}}, "classifier.ridge_alpha"),
    ({"cv": {"k": 2.5}}, "cv.k"),
    ({"cv": {"repeats": True}}, "cv.repeats"),
    ({"seed": -1}, "seed"),
    ({"features": "none"}, "features"),
])
def test_config_errors_name_the_key(given, key):
    with pytest.raises(ConfigError) as info:
        RunConfig.from_dict(given)
    assert info.value.key == key


def test_config_file_and_seed_override(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"estimators": ["PLV", "Cov"], "cv": {"repeats": 2}}))
    cfg = RunConfig.load(p, seed=7)
    assert cfg.estimators == ("Cov", "PLV") and cfg["cv"] == {"k": 5, "repeats": 2} and cfg.seed == 7
    p.write_text("[1, 2")
    with pytest.raises(ConfigError, match="not valid JSON"):
        RunConfig.load(p)
    with pytest.raises(ConfigError, match="cannot read"):
        RunConfig.load(tmp_path / "missing.json")


def test_feature_hash_tracks_only_feature_settings():
    base = RunConfig.from_dict({})
    assert RunConfig.from_dict({"seed": 1, "cv": {"k": 3}}).feature_hash() == base.feature_hash()
    assert RunConfig.from_dict({"classifier": {"ridge_alpha": 5}}).feature_hash() == base.feature_hash()
    assert RunConfig.from_dict({"band_hz": [8, 25]}).feature_hash() != base.feature_hash()
    assert RunConfig.from_dict({"features": {"eps_rel": 1e-5}}).feature_hash() != base.feature_hash()
