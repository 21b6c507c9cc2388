import math

import numpy as np
import pytest

from pda.classifier import (
    ClassifierError,
    ConstantClassifier,
    LinearSoftmaxClassifier,
    LinearSoftmaxWeights,
    TrainingDiverged,
    dataset_accuracy,
    load_weights,
    save_weights,
    softmax,
    softmax_loss_and_gradient,
    train_linear_softmax,
)
from pda.dataset import ClassCatalog, LabeledDataset, Record
from pda.image import Image


def catalog(k: int) -> ClassCatalog:
    return ClassCatalog(tuple(f"c{i}" for i in range(k)))


def image_dataset(images, labels, k) -> LabeledDataset:
    records = [
        Record(source_id=f"r{i}", class_index=int(y), image=img)
        for i, (img, y) in enumerate(zip(images, labels))
    ]
    return LabeledDataset(records, catalog(k))


class TestConstantClassifier:
    def test_uniform_over_seven(self, rng):
        clf = ConstantClassifier.uniform(ClassCatalog.default(), 4, 4, 1)
        probs = clf.classify(Image(rng.random((4, 4, 1))))
        assert np.allclose(probs, 1 / 7)

    def test_rejects_non_distribution(self):
        with pytest.raises(ClassifierError):
            ConstantClassifier([0.6, 0.6], catalog(2), 2, 2, 1)

    def test_dimension_mismatch(self, rng):
        clf = ConstantClassifier.uniform(catalog(2), 4, 4, 1)
        with pytest.raises(ClassifierError):
            clf.classify(Image(rng.random((5, 4, 1))))


class TestLinearSoftmax:
    def test_zero_weights_give_uniform(self, rng):
        w = LinearSoftmaxWeights(np.zeros((3, 4)), np.zeros(3))
        clf = LinearSoftmaxClassifier(w, catalog(3), 2, 2, 1)
        probs = clf.classify(Image(rng.random((2, 2, 1))))
        assert np.allclose(probs, 1 / 3)

    def test_log_two_bias_closed_form(self, rng):
        w = LinearSoftmaxWeights(np.zeros((2, 4)), np.array([math.log(2), 0.0]))
        clf = LinearSoftmaxClassifier(w, catalog(2), 2, 2, 1)
        probs = clf.classify(Image(rng.random((2, 2, 1))))
        assert np.allclose(probs, [2 / 3, 1 / 3])

    def test_bias_shift_invariance(self, rng):
        weights = rng.normal(size=(3, 4))
        img = Image(rng.random((2, 2, 1)))
        base = LinearSoftmaxClassifier(
            LinearSoftmaxWeights(weights, np.array([0.1, -0.2, 0.3])), catalog(3), 2, 2, 1
        ).classify(img)
        shifted = LinearSoftmaxClassifier(
            LinearSoftmaxWeights(weights, np.array([0.1, -0.2, 0.3]) + 5.0), catalog(3), 2, 2, 1
        ).classify(img)
        assert np.allclose(base, shifted, atol=1e-12)

    def test_extreme_logits_stay_finite(self):
        w = LinearSoftmaxWeights(np.full((2, 1), 800.0), np.array([0.0, -800.0]))
        clf = LinearSoftmaxClassifier(w, catalog(2), 1, 1, 1)
        probs = clf.classify(Image(np.array([[1.0]])))
        assert np.all(np.isfinite(probs))
        assert abs(probs.sum() - 1.0) < 1e-9


class TestBatchContract:
    def test_singleton_matches_classify(self, rng):
        w = LinearSoftmaxWeights(rng.normal(size=(2, 4)), rng.normal(size=2))
        clf = LinearSoftmaxClassifier(w, catalog(2), 2, 2, 1)
        img = Image(rng.random((2, 2, 1)))
        assert np.array_equal(clf.classify_batch([img])[0], clf.classify(img))

    def test_identical_inputs_identical_rows(self, rng):
        clf = ConstantClassifier([0.25, 0.75], catalog(2), 2, 2, 1)
        img = Image(rng.random((2, 2, 1)))
        probs = clf.classify_batch([img] * 5)
        assert np.all(probs == probs[0])

    def test_permutation_equivariance(self, rng):
        w = LinearSoftmaxWeights(rng.normal(size=(2, 4)), np.zeros(2))
        clf = LinearSoftmaxClassifier(w, catalog(2), 2, 2, 1)
        images = [Image(rng.random((2, 2, 1))) for _ in range(6)]
        perm = [3, 0, 5, 1, 4, 2]
        direct = clf.classify_batch([images[i] for i in perm])
        via = clf.classify_batch(images)[perm]
        assert np.allclose(direct, via, atol=1e-15)

    def test_rows_sum_to_one(self, rng):
        w = LinearSoftmaxWeights(rng.normal(size=(4, 9)), rng.normal(size=4))
        clf = LinearSoftmaxClassifier(w, catalog(4), 3, 3, 1)
        probs = clf.classify_batch([Image(rng.random((3, 3, 1))) for _ in range(8)])
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_batch_equals_map_classify_bitwise(self, rng):
        w = LinearSoftmaxWeights(rng.normal(size=(3, 147)), rng.normal(size=3))
        clf = LinearSoftmaxClassifier(w, catalog(3), 7, 7, 3)
        images = [Image(rng.random((7, 7, 3))) for _ in range(9)]
        batch = clf.classify_batch(images)
        singles = np.stack([clf.classify(img) for img in images])
        assert np.array_equal(batch, singles)


class TestTrainer:
    def test_single_sample_memorized(self, rng):
        img = Image(rng.random((3, 3, 1)))
        ds = image_dataset([img], [1], 2)
        result = train_linear_softmax(ds, epochs=500, learning_rate=1.0)
        clf = LinearSoftmaxClassifier(result.weights, ds.catalog, 3, 3, 1)
        assert clf.classify(img)[1] > 0.99

    def test_gradient_matches_central_differences(self, rng):
        # Finite-difference oracle over every component, step 1e-5.
        n, d, k = 5, 8, 3
        x = rng.random((n, d))
        y = np.zeros((n, k))
        y[np.arange(n), rng.integers(0, k, n)] = 1.0
        w = rng.normal(size=(k, d)) * 0.3
        b = rng.normal(size=k) * 0.3
        l2 = 0.05
        _, grad_w, grad_b = softmax_loss_and_gradient(x, y, w, b, l2)

        def loss_at(w_, b_):
            return softmax_loss_and_gradient(x, y, w_, b_, l2)[0]

        step = 1e-5
        num_w = np.zeros_like(w)
        for i in range(k):
            for j in range(d):
                up, down = w.copy(), w.copy()
                up[i, j] += step
                down[i, j] -= step
                num_w[i, j] = (loss_at(up, b) - loss_at(down, b)) / (2 * step)
        num_b = np.zeros_like(b)
        for i in range(k):
            up, down = b.copy(), b.copy()
            up[i] += step
            down[i] -= step
            num_b[i] = (loss_at(w, up) - loss_at(w, down)) / (2 * step)
        assert np.abs(grad_w - num_w).max() < 1e-6
        assert np.abs(grad_b - num_b).max() < 1e-6

    def test_duplicated_samples_keep_outputs_uniform(self, rng):
        # The same inputs labeled with both classes: by symmetry the model
        # can never prefer either class.
        img = Image(rng.random((2, 2, 1)))
        ds = image_dataset([img, img], [0, 1], 2)
        result = train_linear_softmax(ds, epochs=100, learning_rate=0.7, l2=0.0)
        clf = LinearSoftmaxClassifier(result.weights, ds.catalog, 2, 2, 1)
        assert np.allclose(clf.classify(img), [0.5, 0.5], atol=1e-12)

    def test_bitwise_deterministic(self, rng):
        images = [Image(rng.random((2, 2, 1))) for _ in range(6)]
        labels = [0, 1, 0, 1, 1, 0]
        ds = image_dataset(images, labels, 2)
        a = train_linear_softmax(ds, epochs=50, learning_rate=0.2, l2=0.01, seed=3)
        b = train_linear_softmax(ds, epochs=50, learning_rate=0.2, l2=0.01, seed=3)
        assert np.array_equal(a.weights.weights, b.weights.weights)
        assert np.array_equal(a.weights.bias, b.weights.bias)
        assert a.losses == b.losses

    def test_loss_trajectory_reported_and_decreasing(self, rng):
        images = [Image(rng.random((2, 2, 1))) for _ in range(8)]
        ds = image_dataset(images, [i % 2 for i in range(8)], 2)
        result = train_linear_softmax(ds, epochs=40, learning_rate=0.1)
        assert len(result.losses) == 40
        assert result.losses[-1] <= result.losses[0]

    def test_divergence_reports_epoch(self, rng):
        images = [Image(rng.random((2, 2, 1))) for _ in range(4)]
        ds = image_dataset(images, [0, 1, 0, 1], 2)
        with pytest.raises(TrainingDiverged, match="epoch"):
            train_linear_softmax(ds, epochs=10, learning_rate=1e308)

    def test_empty_training_set_rejected(self):
        ds = LabeledDataset([], catalog(2))
        with pytest.raises(ClassifierError):
            train_linear_softmax(ds, epochs=1, learning_rate=0.1)


class TestWeightsIo:
    def test_lsw1_roundtrip_exact(self, rng, tmp_path):
        w = LinearSoftmaxWeights(rng.normal(size=(3, 7)), rng.normal(size=3))
        path = tmp_path / "weights.lsw"
        save_weights(w, path)
        header = path.read_text().splitlines()[0]
        assert header == "LSW1 3 7"
        back = load_weights(path)
        assert np.array_equal(back.weights, w.weights)
        assert np.array_equal(back.bias, w.bias)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "weights.lsw"
        path.write_text("NOPE 1 2\n0 0 0\n")
        with pytest.raises(ClassifierError):
            load_weights(path)

    def test_wrong_value_count_rejected(self, tmp_path):
        path = tmp_path / "weights.lsw"
        path.write_text("LSW1 2 2\n0 0 0\n")
        with pytest.raises(ClassifierError):
            load_weights(path)


def test_dataset_accuracy(rng):
    imgs = [Image(np.full((1, 1, 1), v)) for v in (0.1, 0.9)]
    ds = image_dataset(imgs, [0, 1], 2)
    w = LinearSoftmaxWeights(np.array([[-10.0], [10.0]]), np.array([5.0, -5.0]))
    clf = LinearSoftmaxClassifier(w, ds.catalog, 1, 1, 1)
    assert dataset_accuracy(clf, ds) == 1.0


def test_softmax_never_overflows():
    probs = softmax(np.array([[1e300, -1e300, 0.0]]))
    assert np.all(np.isfinite(probs))
