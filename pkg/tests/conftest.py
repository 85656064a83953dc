"""Shared fixtures: blob datasets, a trained model, and an IDX digits fixture.

The IDX files are written here with raw struct packing, independent of the
package loader, so loader tests exercise a genuine byte-level round trip.
"""

from __future__ import annotations

import struct

import numpy as np
import pytest

from outrand.data import BlobSpec, Dataset, make_blobs
from outrand.models import Classifier, train_classifier

# Cluster means placed so every class sits well inside [0,1]^2 after the
# min-max mapping while decision boundaries stay within attack reach.
BLOB_MEANS = ((0.32, 0.28), (0.68, 0.30), (0.48, 0.65))
TRAIN_SPEC = BlobSpec(means=BLOB_MEANS, seed=11)
TEST_SPEC = BlobSpec(means=BLOB_MEANS, seed=12)


@pytest.fixture(scope="session")
def blob_train() -> Dataset:
    return make_blobs(TRAIN_SPEC)


@pytest.fixture(scope="session")
def blob_test() -> Dataset:
    return make_blobs(TEST_SPEC)


@pytest.fixture(scope="session")
def blob_model(blob_train) -> Classifier:
    return train_classifier(blob_train, hidden=(64,), epochs=30, seed=0)


@pytest.fixture(scope="session")
def blob_checkpoint(blob_model, tmp_path_factory) -> str:
    path = tmp_path_factory.mktemp("ckpt") / "blobs.ckpt"
    blob_model.save(str(path))
    return str(path)


def write_idx_pair(images: np.ndarray, labels: np.ndarray, images_path, labels_path,
                   rows: int, cols: int) -> None:
    """Reference IDX writer used as the loader's independent oracle."""
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), rows, cols))
        f.write(images.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


@pytest.fixture(scope="session")
def digits_idx(tmp_path_factory):
    """sklearn digits re-encoded as IDX byte files (8x8, values 0..255)."""
    sklearn_datasets = pytest.importorskip("sklearn.datasets")
    digits = sklearn_datasets.load_digits()
    images = np.round(digits.images / 16.0 * 255.0).astype(np.uint8)
    labels = digits.target.astype(np.uint8)
    root = tmp_path_factory.mktemp("digits")
    img_path, lab_path = str(root / "digits-images.idx"), str(root / "digits-labels.idx")
    write_idx_pair(images.reshape(len(images), -1), labels, img_path, lab_path, 8, 8)
    return img_path, lab_path, images, labels
