"""Classifier forward/backward, training, checkpoints, evaluation."""

import math

import numpy as np
import pytest

from outrand.data import BlobSpec, Dataset, load_idx, make_blobs
from outrand.defense import NoiseModel
from outrand.models import (Classifier, batch_loss_and_grads, evaluate_accuracy,
                            init_classifier, softmax, train_classifier)


class TestSoftmaxForward:
    def test_symmetry(self):
        np.testing.assert_allclose(softmax(np.array([0.0, 0.0])), [0.5, 0.5])

    def test_exact_arithmetic(self):
        np.testing.assert_allclose(softmax(np.array([math.log(2.0), 0.0])),
                                   [2.0 / 3.0, 1.0 / 3.0], rtol=1e-15)

    def test_large_logits_stable(self):
        out = softmax(np.array([1000.0, 0.0]))
        assert np.isfinite(out).all()
        assert out[0] == pytest.approx(1.0)
        assert out[1] == pytest.approx(0.0, abs=1e-300)

    def test_forward_sums_to_one(self, blob_model, blob_test):
        probs = blob_model.forward(blob_test.pixels)
        assert probs.min() >= 0.0
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_dimension_mismatch(self, blob_model):
        with pytest.raises(ValueError, match="dimension"):
            blob_model.forward(np.zeros(5))

    def test_deterministic(self, blob_model):
        x = np.array([0.3, 0.7])
        np.testing.assert_array_equal(blob_model.forward(x), blob_model.forward(x))


def _fd_param_grads(model, x, y, step=1e-5):
    """Central finite differences of the training loss over every parameter."""
    fd = []
    for layer in model.layers:
        for arr in (layer.weights, layer.bias):
            g = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + step
                lp, _ = batch_loss_and_grads(model, x, y)
                arr[idx] = orig - step
                lm, _ = batch_loss_and_grads(model, x, y)
                arr[idx] = orig
                g[idx] = (lp - lm) / (2.0 * step)
            fd.append(g)
    return fd


class TestBackprop:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_param_grads_match_fd(self, seed):
        rng = np.random.default_rng(seed)
        n, c = int(rng.integers(2, 11)), int(rng.integers(2, 5))
        model = init_classifier([n, 6, c], seed=seed)
        x = rng.uniform(0, 1, size=(8, n))
        y = rng.integers(0, c, size=8)
        _, grads = batch_loss_and_grads(model, x, y)
        flat_bp = [g for pair in grads for g in pair]
        flat_fd = _fd_param_grads(model, x, y)
        for bp, fd in zip(flat_bp, flat_fd):
            denom = np.maximum(np.abs(fd), 1e-6)
            assert np.max(np.abs(bp - fd) / denom) < 1e-4

    def test_input_gradient_matches_fd(self, blob_model):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.uniform(0.1, 0.9, 2)
            grad_probs = rng.standard_normal(3)
            bp = blob_model.input_gradient(x, grad_probs)
            for i in range(2):
                e = np.zeros(2)
                e[i] = 1e-6
                fd = (blob_model.forward(x + e) @ grad_probs
                      - blob_model.forward(x - e) @ grad_probs) / 2e-6
                assert bp[i] == pytest.approx(fd, rel=1e-4, abs=1e-7)


def _pairwise_linearly_separable(data: Dataset) -> bool:
    """Brute-force oracle: every class pair splits along some direction."""
    angles = np.linspace(0.0, np.pi, 720, endpoint=False)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    for a in range(data.num_classes):
        for b in range(a + 1, data.num_classes):
            pa = data.pixels[data.labels == a] @ dirs.T
            pb = data.pixels[data.labels == b] @ dirs.T
            split = (pa.max(axis=0) < pb.min(axis=0)) | (pb.max(axis=0) < pa.min(axis=0))
            if not split.any():
                return False
    return True


class TestTraining:
    def test_zero_epochs_equals_init(self, blob_train):
        trained = train_classifier(blob_train, epochs=0, seed=13)
        fresh = init_classifier([blob_train.n, 64, blob_train.num_classes], seed=13)
        for a, b in zip(trained.layers, fresh.layers):
            np.testing.assert_array_equal(a.weights, b.weights)
            np.testing.assert_array_equal(a.bias, b.bias)

    def test_empty_dataset_rejected(self):
        empty = Dataset(np.empty((0, 2)), np.empty(0, dtype=int), "empty", num_classes=2)
        with pytest.raises(ValueError, match="empty"):
            train_classifier(empty)

    def test_separable_blobs_reach_99(self):
        # 3 classes x 100 points, tight spread: first confirm separability
        # with the brute-force oracle, then expect near-perfect training.
        data = make_blobs(BlobSpec(per_class=100, spread=0.03, seed=21))
        assert _pairwise_linearly_separable(data)
        model = train_classifier(data, epochs=30, seed=1)
        assert evaluate_accuracy(model, data) >= 0.99

    def test_same_seed_bit_identical(self, blob_train):
        a = train_classifier(blob_train, epochs=3, seed=5)
        b = train_classifier(blob_train, epochs=3, seed=5)
        for la, lb in zip(a.layers, b.layers):
            np.testing.assert_array_equal(la.weights, lb.weights)
            np.testing.assert_array_equal(la.bias, lb.bias)

    def test_digits_subset_reaches_90(self, digits_idx):
        ip, lp, _, _ = digits_idx
        data = load_idx(ip, lp)
        train = Dataset(data.pixels[:1000], data.labels[:1000], "digits-train",
                        num_classes=10)
        test = Dataset(data.pixels[1000:], data.labels[1000:], "digits-test",
                       num_classes=10)
        model = train_classifier(train, hidden=(64,), epochs=30,
                                 learning_rate=0.2, seed=0)
        assert evaluate_accuracy(model, test) >= 0.90


class TestEvaluateAccuracy:
    def test_perfect_model_no_noise(self, blob_model, blob_test):
        assert evaluate_accuracy(blob_model, blob_test) == 1.0

    def test_zero_variance_matches_clean(self, blob_model, blob_test):
        clean = evaluate_accuracy(blob_model, blob_test)
        zero = NoiseModel.isotropic(0.0, 3)
        assert evaluate_accuracy(blob_model, blob_test, zero, seed=4) == clean

    def test_tiny_noise_preserves_accuracy(self, blob_model, blob_test):
        clean = evaluate_accuracy(blob_model, blob_test)
        noise = NoiseModel.isotropic(1e-4, 3)
        accs = [evaluate_accuracy(blob_model, blob_test, noise, seed=s)
                for s in range(30)]
        assert abs(float(np.mean(accs)) - clean) <= 0.01

    def test_empty_dataset_rejected(self, blob_model):
        empty = Dataset(np.empty((0, 2)), np.empty(0, dtype=int), "empty", num_classes=3)
        with pytest.raises(ValueError):
            evaluate_accuracy(blob_model, empty)


class TestCheckpoint:
    def test_round_trip_exact(self, blob_model, tmp_path):
        path = str(tmp_path / "m.ckpt")
        blob_model.save(path)
        loaded = Classifier.load(path)
        for a, b in zip(blob_model.layers, loaded.layers):
            np.testing.assert_array_equal(a.weights, b.weights)
            np.testing.assert_array_equal(a.bias, b.bias)
            assert a.activation == b.activation

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_text("not a checkpoint\n")
        with pytest.raises(ValueError, match="checkpoint"):
            Classifier.load(str(path))
