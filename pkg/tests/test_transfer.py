import numpy as np
import pytest

from rigoletto.classify import StackedEnsemble
from rigoletto.connectivity import FeatureBundle, FeatureConfig, extract_features
from rigoletto.errors import InvalidInput
from rigoletto.manifold import mean_airm, mean_logeuclid
from rigoletto.synth import generate_subjects
from rigoletto.transfer import (
    SubjectBundle,
    build_subject,
    predict_with_source,
    select_source,
    source_distances,
    subject_mean,
    transfer_predict,
    transport_bundle,
    vote_weights,
    weighted_vote_predict,
)

from conftest import random_spd


@pytest.fixture(scope="module")
def sources(small_bundles):
    return [build_subject(sid, b, StackedEnsemble(seed=0).fit(b)) for sid, b in small_bundles.items()]


def test_subject_mean_examples(rng):
    A = random_spd(rng, 3)
    np.testing.assert_array_equal(subject_mean(A[None]), A)
    X = random_spd(rng, 3, 4)
    np.testing.assert_allclose(subject_mean(np.concatenate([X, X])), subject_mean(X), atol=1e-10)
    D = np.stack([np.diag(np.exp(rng.uniform(-1, 1, 3))) for _ in range(5)])
    np.testing.assert_allclose(subject_mean(D), mean_logeuclid(D), atol=1e-8)


def test_select_source_examples(sources):
    for s in sources:
        assert select_source(s.subject_mean, sources) == s.subject_id
    assert select_source(np.eye(6), sources[:1]) == sources[0].subject_id
    with pytest.raises(InvalidInput):
        select_source(np.eye(6), [])


def test_select_source_permutation_consistent(sources, rng):
    target = random_spd(rng, 6) + sources[1].subject_mean
    d = source_distances(target, sources)
    assert abs(d[0] - d[1]) > 1e-9
    assert select_source(target, sources) == select_source(target, sources[::-1])


def test_subject_bundle_dimension_check(sources):
    with pytest.raises(InvalidInput):
        SubjectBundle("x", sources[0].model, np.eye(3))
    with pytest.raises(InvalidInput):
        build_subject("x", FeatureBundle({"PLV": np.stack([np.eye(2)] * 4)}, [0, 1, 0, 1]))


def test_transport_bundle_recenters_each_estimator(small_bundles, sources):
    target = small_bundles["S02"]
    ref = sources[0].model.reference_means_
    moved = transport_bundle(target, ref)
    for est in target.estimators:
        np.testing.assert_allclose(mean_airm(moved[est]), ref[est], atol=1e-6 * np.linalg.norm(ref[est]))
    # the re-certified floors still hold, otherwise construction would have raised
    assert set(moved.floors) == set(target.floors)


def test_transfer_on_own_training_set_is_identity(small_bundles, sources):
    b = small_bundles["S01"]
    src = sources[0]
    labels, proba, chosen = transfer_predict(b, src.subject_mean, sources)
    assert chosen == "S01"
    np.testing.assert_array_equal(labels, src.model.predict(b))
    np.testing.assert_array_equal(proba, src.model.predict_proba(b))
    again = transfer_predict(b, src.subject_mean, sources)
    np.testing.assert_array_equal(again[1], proba)


def test_weighted_vote_concentrates_on_nearest(small_bundles, sources):
    b = small_bundles["S01"]
    labels, proba, w = weighted_vote_predict(b, sources[0].subject_mean, sources)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    _, own = predict_with_source(b, sources[0])
    np.testing.assert_allclose(proba, own, atol=1e-6)
    np.testing.assert_array_equal(labels, np.argmax(proba, axis=1))


def test_weighted_vote_equidistant_identical_sources(small_bundles, sources):
    b = small_bundles["S02"]
    src = sources[0]
    twins = [SubjectBundle(name, src.model, src.subject_mean) for name in ("a", "b", "c")]
    _, proba, w = weighted_vote_predict(b, np.eye(6), twins)
    np.testing.assert_allclose(w, 1 / 3, atol=1e-12)
    np.testing.assert_allclose(proba, predict_with_source(b, src)[1], atol=1e-12)


def test_weighted_vote_is_convex(small_bundles, sources, rng):
    b = small_bundles["S02"]
    target_mean = random_spd(rng, 6) + np.eye(6)
    _, proba, w = weighted_vote_predict(b, target_mean, sources)
    np.testing.assert_allclose(w, vote_weights(target_mean, sources), atol=0)
    per = np.stack([predict_with_source(b, s)[1] for s in sources])
    assert np.all(proba >= per.min(axis=0) - 1e-12) and np.all(proba <= per.max(axis=0) + 1e-12)


def test_clone_is_selected():
    subjects = generate_subjects(4, trials_per_class=12, n_channels=6, duration_s=4.0,
                                 seed=3, clone_pairs=True)
    cfg = FeatureConfig(window_s=(1.0, 3.5))
    bundles = {s: extract_features(e, ("Cov",), cfg) for s, e in subjects.items()}
    means = {s: subject_mean(b["Cov"]) for s, b in bundles.items()}
    built = [build_subject(s, b, StackedEnsemble(seed=0).fit(b)) for s, b in bundles.items()]
    partner = {"S01": "S02", "S02": "S01", "S03": "S04", "S04": "S03"}
    for t in bundles:
        others = [s for s in built if s.subject_id != t]
        assert select_source(means[t], others) == partner[t]
