"""Open-set model: Weibull fitting, cover reduction, probabilities, storage."""

import dataclasses

import numpy as np
import pytest
from scipy import stats
from scipy.spatial.distance import cdist

from scriptdrift import evm
from scriptdrift.seeding import derive_rng


def weibull_loglik(x, shape, scale):
    x = np.maximum(np.asarray(x, dtype=np.float64), 1e-12)
    z = x / scale
    return float(
        np.sum(np.log(shape / scale) + (shape - 1) * np.log(z) - z**shape)
    )


def test_weibull_mle_recovers_parameters():
    rng = derive_rng(41, "weib")
    for true_shape, true_scale in ((0.8, 0.5), (1.5, 2.0), (3.0, 1.0)):
        x = true_scale * rng.weibull(true_shape, size=10_000)
        shape, scale = evm.weibull_mle(x)
        assert abs(shape - true_shape) / true_shape < 0.05
        assert abs(scale - true_scale) / true_scale < 0.03


def test_weibull_mle_matches_reference_optimizer():
    rng = derive_rng(41, "weib2")
    for n in (100, 1000):
        for true_shape in (0.7, 1.0, 2.5):
            x = rng.weibull(true_shape, size=n) * 1.7
            shape, scale = evm.weibull_mle(x)
            ref_shape, _, ref_scale = stats.weibull_min.fit(x, floc=0)
            assert shape == pytest.approx(ref_shape, rel=1e-3)
            assert scale == pytest.approx(ref_scale, rel=1e-3)
            # Neither estimate should beat the other on the data likelihood.
            assert weibull_loglik(x, shape, scale) >= (
                weibull_loglik(x, ref_shape, ref_scale) - 1e-6
            )


def test_weibull_mle_sits_at_a_likelihood_peak():
    rng = derive_rng(41, "weib3")
    x = rng.weibull(1.8, size=500) * 0.9
    shape, scale = evm.weibull_mle(x)
    best = weibull_loglik(x, shape, scale)
    for ds in (-0.01, 0.01):
        for dc in (-0.01, 0.01):
            assert weibull_loglik(x, shape * (1 + ds), scale * (1 + dc)) <= best


def test_weibull_mle_rejects_bad_inputs():
    with pytest.raises(evm.EvmError):
        evm.weibull_mle([1.0])
    with pytest.raises(evm.EvmError):
        evm.weibull_mle([1.0, -0.5])


def test_weibull_mle_constant_samples_give_step_fit():
    shape, scale = evm.weibull_mle(np.full(50, 3.3))
    assert scale == 3.3
    # Steep enough to act as a boundary at the common value.
    with np.errstate(over="ignore"):
        inside = np.exp(-(np.float64(3.2 / scale) ** shape))
        outside = np.exp(-(np.float64(3.4 / scale) ** shape))
    assert inside > 0.999
    assert outside < 1e-9


def test_weibull_mle_tolerates_zeros():
    rng = derive_rng(41, "weib4")
    x = np.concatenate([np.zeros(3), rng.weibull(2.0, size=200)])
    shape, scale = evm.weibull_mle(x)
    assert np.isfinite(shape) and np.isfinite(scale)
    assert shape > 0 and scale > 0


def test_pairwise_distances_match_reference():
    rng = derive_rng(41, "dist")
    a = rng.normal(size=(12, 5))
    b = rng.normal(size=(9, 5))
    assert np.allclose(
        evm.pairwise_distances(a, b, "euclidean"), cdist(a, b, "euclidean"), atol=1e-10
    )
    assert np.allclose(
        evm.pairwise_distances(a, b, "cosine"), cdist(a, b, "cosine"), atol=1e-10
    )
    with pytest.raises(evm.EvmError):
        evm.pairwise_distances(a, b, "manhattan")


def test_cosine_distance_of_zero_vector_is_one():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([[1.0, 1.0], [0.0, 0.0]])
    d = evm.pairwise_distances(a, b, "cosine")
    assert (d[0] == 1.0).all()
    assert (d[:, 1] == 1.0).all()


def _blob_training(rng, centers, n=20, spread=0.1):
    return {
        f"c{i}": rng.normal(loc=c, scale=spread, size=(n, len(c)))
        for i, c in enumerate(centers)
    }


def test_fit_covers_every_training_point():
    rng = derive_rng(41, "cover")
    data = _blob_training(rng, [(0, 0), (4, 0), (0, 4)], n=30)
    hyper = evm.EvmHyperparams(tail_size=10, distance="euclidean")
    model = evm.fit(data, hyper)
    assert model.labels == ["c0", "c1", "c2"]
    for cls, label in zip(model.classes, model.labels):
        act = np.exp(
            -((evm.pairwise_distances(data[label], cls.anchors, "euclidean")
               / cls.scales[None, :]) ** cls.shapes[None, :])
        )
        assert (act.max(axis=1) >= hyper.cover_threshold).all()
        assert cls.anchors.dtype == np.float32


def test_identical_points_collapse_to_one_anchor():
    rng = derive_rng(41, "collapse")
    data = {
        "same": np.tile([1.0, 2.0], (8, 1)),
        "spread": rng.normal(loc=(6, 6), scale=0.5, size=(8, 2)),
    }
    model = evm.fit(data, evm.EvmHyperparams(distance="euclidean"))
    same = model.classes[model.labels.index("same")]
    assert same.anchors.shape[0] == 1


def test_fit_requires_two_nonempty_classes():
    with pytest.raises(evm.EvmError):
        evm.fit({"only": np.zeros((3, 2))})
    with pytest.raises(evm.EvmError):
        evm.fit({"a": np.zeros((3, 2)), "b": np.zeros((0, 2))})


def test_predict_probability_contract():
    rng = derive_rng(41, "prob")
    data = _blob_training(rng, [(0, 0), (5, 0)], n=25)
    model = evm.fit(data, evm.EvmHyperparams(tail_size=25, distance="euclidean"))
    x = rng.normal(loc=(2.5, 0), scale=2.0, size=(200, 2))
    probs = evm.predict(model, x)
    scores = evm.class_scores(model, x)
    assert probs.shape == (200, 3)
    assert np.all(probs >= 0) and np.all(probs <= 1)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    positive = scores.max(axis=1) > 0
    assert np.array_equal(
        probs[positive, :2].argmax(axis=1), scores[positive].argmax(axis=1)
    )


def test_predict_far_point_is_pure_novelty():
    rng = derive_rng(41, "far")
    data = _blob_training(rng, [(0, 0), (3, 0)], n=15)
    model = evm.fit(data, evm.EvmHyperparams(tail_size=15, distance="euclidean"))
    probs = evm.predict(model, np.array([[1e6, 1e6]]))
    assert np.array_equal(probs[0], [0.0, 0.0, 1.0])


def test_predict_rejects_wrong_dimension():
    rng = derive_rng(41, "dim")
    model = evm.fit(
        _blob_training(rng, [(0, 0), (3, 0)]), evm.EvmHyperparams(distance="euclidean")
    )
    with pytest.raises(evm.EvmError):
        evm.predict(model, np.zeros((1, 5)))


def test_ranked_labels_orders_by_probability():
    rng = derive_rng(41, "rank")
    model = evm.fit(
        _blob_training(rng, [(0, 0), (4, 0)]), evm.EvmHyperparams(distance="euclidean")
    )
    rows = evm.ranked_labels(model, np.array([[0.2, 0.1, 0.7], [0.5, 0.5, 0.0]]))
    assert rows[0] == ["novel", "c0", "c1"]
    # Ties keep the original label order.
    assert rows[1] == ["c0", "c1", "novel"]


def oracle_calibration(known, novel):
    observed = np.unique(np.concatenate([known, novel]))
    candidates = np.unique(np.concatenate([[0.0], observed, np.nextafter(observed, np.inf)]))
    rows = []
    for t in candidates:
        fpr = float(np.mean(known < t))
        fnr = float(np.mean(novel >= t))
        rows.append((abs(fpr - fnr), t, fpr, fnr))
    gap = min(r[0] for r in rows)
    best = min(t for g, t, _, _ in rows if g == gap)
    return next(r for r in rows if r[1] == best)


def test_calibrate_threshold_matches_exhaustive_search():
    rng = derive_rng(41, "calib")
    for _ in range(60):
        n_known = int(rng.integers(3, 40))
        n_novel = int(rng.integers(3, 40))
        known = np.round(rng.uniform(size=n_known), 2)
        novel = np.round(rng.uniform(high=0.8, size=n_novel), 2)
        got = evm.calibrate_threshold(known, novel)
        _, want_t, want_fpr, want_fnr = oracle_calibration(known, novel)
        assert got.threshold == want_t
        assert got.fpr == pytest.approx(want_fpr)
        assert got.fnr == pytest.approx(want_fnr)
        assert got.eer == pytest.approx(0.5 * (got.fpr + got.fnr))


def test_calibrate_threshold_perfect_separation():
    known = np.array([0.8, 0.9, 0.95])
    novel = np.array([0.1, 0.2, 0.3])
    got = evm.calibrate_threshold(known, novel)
    assert got.fpr == 0.0 and got.fnr == 0.0
    assert got.threshold == np.nextafter(0.3, np.inf)


def test_calibrate_threshold_needs_both_sides():
    with pytest.raises(evm.EvmError):
        evm.calibrate_threshold([], [0.5])
    with pytest.raises(evm.EvmError):
        evm.calibrate_threshold([0.5], [])


def _small_model(rng):
    data = _blob_training(rng, [(0, 0), (4, 0)], n=10)
    model = evm.fit(
        data,
        evm.EvmHyperparams(tail_size=5, distance="euclidean", cover_threshold=0.6),
        extractor_id="mean-hog",
    )
    return dataclasses.replace(model, novelty_threshold=0.37)


def test_model_save_load_round_trip(tmp_path):
    rng = derive_rng(41, "io")
    model = _small_model(rng)
    path = tmp_path / "model.evm"
    evm.save_model(model, path)
    loaded = evm.load_model(path)
    assert loaded.labels == model.labels
    assert loaded.hyper == model.hyper
    assert loaded.extractor_id == "mean-hog"
    assert loaded.novelty_threshold == 0.37
    for a, b in zip(loaded.classes, model.classes):
        assert np.array_equal(a.anchors, b.anchors)
        assert np.array_equal(a.shapes, b.shapes)
        assert np.array_equal(a.scales, b.scales)
    probs_a = evm.predict(model, np.array([[1.0, 0.5]]))
    probs_b = evm.predict(loaded, np.array([[1.0, 0.5]]))
    assert np.array_equal(probs_a, probs_b)


def test_model_without_threshold_round_trips_none(tmp_path):
    rng = derive_rng(41, "io2")
    model = dataclasses.replace(_small_model(rng), novelty_threshold=None)
    path = tmp_path / "model.evm"
    evm.save_model(model, path)
    assert evm.load_model(path).novelty_threshold is None


def test_corrupt_model_files_are_rejected(tmp_path):
    rng = derive_rng(41, "io3")
    model = _small_model(rng)
    path = tmp_path / "model.evm"
    evm.save_model(model, path)
    blob = path.read_bytes()

    flipped = bytearray(blob)
    flipped[20] ^= 0xFF
    (tmp_path / "flip.evm").write_bytes(bytes(flipped))
    with pytest.raises(evm.EvmError, match="checksum"):
        evm.load_model(tmp_path / "flip.evm")

    (tmp_path / "trunc.evm").write_bytes(blob[: len(blob) // 2])
    with pytest.raises(evm.EvmError):
        evm.load_model(tmp_path / "trunc.evm")

    import struct
    import zlib

    bad_magic = b"XXXX" + blob[4:-4]
    (tmp_path / "magic.evm").write_bytes(
        bad_magic + struct.pack("<I", zlib.crc32(bad_magic) & 0xFFFFFFFF)
    )
    with pytest.raises(evm.EvmError, match="magic"):
        evm.load_model(tmp_path / "magic.evm")

    bad_version = blob[:4] + struct.pack("<I", 99) + blob[8:-4]
    (tmp_path / "ver.evm").write_bytes(
        bad_version + struct.pack("<I", zlib.crc32(bad_version) & 0xFFFFFFFF)
    )
    with pytest.raises(evm.EvmError, match="version"):
        evm.load_model(tmp_path / "ver.evm")

    padded = blob[:-4] + b"\x00\x00"
    (tmp_path / "pad.evm").write_bytes(
        padded + struct.pack("<I", zlib.crc32(padded) & 0xFFFFFFFF)
    )
    with pytest.raises(evm.EvmError, match="trailing"):
        evm.load_model(tmp_path / "pad.evm")


def test_tail_size_larger_than_pool_uses_everything():
    rng = derive_rng(41, "tail")
    data = _blob_training(rng, [(0, 0), (4, 0)], n=6)
    model = evm.fit(data, evm.EvmHyperparams(tail_size=1000, distance="euclidean"))
    assert len(model.classes) == 2


def test_hyperparameter_validation():
    with pytest.raises(evm.EvmError):
        evm.EvmHyperparams(tail_size=0)
    with pytest.raises(evm.EvmError):
        evm.EvmHyperparams(cover_threshold=0.0)
    with pytest.raises(evm.EvmError):
        evm.EvmHyperparams(cover_threshold=1.2)
    with pytest.raises(evm.EvmError):
        evm.EvmHyperparams(distance="hamming")
    with pytest.raises(evm.EvmError):
        evm.EvmHyperparams(distance_multiplier=0.0)
