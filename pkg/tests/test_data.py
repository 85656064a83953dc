"""Loaders: blobs construction, IDX byte-level round trip, CSV contract."""

import struct

import numpy as np
import pytest

from outrand.data import (BlobSpec, Dataset, load_csv, load_dataset, load_idx,
                          make_blobs)
from tests.conftest import write_idx_pair


class TestBlobs:
    def test_counts_and_balance(self):
        data = make_blobs(BlobSpec(classes=2, per_class=10, seed=3))
        assert data.size == 20
        assert np.bincount(data.labels).tolist() == [10, 10]

    def test_pixels_in_unit_box(self):
        data = make_blobs(BlobSpec(seed=5))
        assert data.pixels.min() >= 0.0 and data.pixels.max() <= 1.0

    def test_deterministic_given_seed(self):
        a = make_blobs(BlobSpec(seed=9))
        b = make_blobs(BlobSpec(seed=9))
        np.testing.assert_array_equal(a.pixels, b.pixels)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_explicit_means_shape_checked(self):
        with pytest.raises(ValueError):
            make_blobs(BlobSpec(means=((0.1, 0.2),)))

    def test_example_access(self):
        data = make_blobs(BlobSpec(classes=2, per_class=3, seed=1))
        ex = data.example(0)
        assert ex.pixels.shape == (2,)
        assert ex.label == 0


class TestIdx:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, size=(100, 28 * 28), dtype=np.uint8)
        labels = rng.integers(0, 10, size=100, dtype=np.uint8)
        ip, lp = str(tmp_path / "i.idx"), str(tmp_path / "l.idx")
        write_idx_pair(images, labels, ip, lp, 28, 28)
        data = load_idx(ip, lp)
        assert data.n == 784 and data.size == 100
        assert data.pixels.min() >= 0.0 and data.pixels.max() <= 1.0
        # byte-level identity after undoing the /255 scaling
        np.testing.assert_array_equal(
            np.round(data.pixels * 255.0).astype(np.uint8), images)
        np.testing.assert_array_equal(data.labels, labels)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.idx"
        path.write_bytes(struct.pack(">IIII", 0x00000802, 1, 2, 2) + b"\x00" * 4)
        lp = tmp_path / "l.idx"
        lp.write_bytes(struct.pack(">II", 0x00000801, 1) + b"\x00")
        with pytest.raises(ValueError, match="bad magic"):
            load_idx(str(path), str(lp))

    def test_truncated(self, tmp_path):
        path = tmp_path / "short.idx"
        path.write_bytes(struct.pack(">IIII", 0x00000803, 5, 2, 2) + b"\x00" * 3)
        lp = tmp_path / "l.idx"
        lp.write_bytes(struct.pack(">II", 0x00000801, 5) + b"\x00" * 5)
        with pytest.raises(ValueError, match="truncated"):
            load_idx(str(path), str(lp))

    def test_label_out_of_range(self, tmp_path):
        images = np.zeros((3, 4), dtype=np.uint8)
        labels = np.array([0, 7, 1], dtype=np.uint8)
        ip, lp = str(tmp_path / "i.idx"), str(tmp_path / "l.idx")
        write_idx_pair(images, labels, ip, lp, 2, 2)
        with pytest.raises(ValueError, match="record 1"):
            load_idx(ip, lp, num_classes=2)

    def test_digits_fixture_loads(self, digits_idx):
        ip, lp, images, labels = digits_idx
        data = load_idx(ip, lp)
        assert data.n == 64 and data.size == len(labels)
        np.testing.assert_array_equal(data.labels, labels)


class TestCsv:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("label,f0,f1\n0,0.25,1.0\n2,0.0,0.5\n")
        data = load_csv(str(path))
        assert data.n == 2 and data.size == 2 and data.num_classes == 3
        np.testing.assert_allclose(data.pixels, [[0.25, 1.0], [0.0, 0.5]])

    def test_feature_out_of_range_names_record(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("label,f0\n0,0.5\n1,1.5\n")
        with pytest.raises(ValueError, match="record 1"):
            load_csv(str(path))

    def test_missing_header(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("lab,f0\n0,0.5\n")
        with pytest.raises(ValueError, match="header"):
            load_csv(str(path))


class TestDatasetRefs:
    def test_blobs_ref(self):
        data = load_dataset("blobs:classes=2,per_class=5,seed=4")
        assert data.size == 10 and data.num_classes == 2

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown dataset kind"):
            load_dataset("parquet:foo")

    def test_idx_ref_needs_two_paths(self):
        with pytest.raises(ValueError, match="two paths"):
            load_dataset("idx:only_one")


class TestDatasetValidation:
    def test_rejects_out_of_box_pixels(self):
        with pytest.raises(ValueError, match="record 0"):
            Dataset(np.array([[1.5, 0.0]]), np.array([0]), "bad", num_classes=1)

    def test_rejects_bad_label(self):
        with pytest.raises(ValueError, match="label"):
            Dataset(np.array([[0.5, 0.5]]), np.array([3]), "bad", num_classes=2)
