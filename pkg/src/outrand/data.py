"""Dataset ingestion: synthetic Gaussian blobs, IDX image/label pairs, CSV.

All pixel features live in [0, 1]. Loaders validate that and name the
offending record when they refuse a file.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class Example:
    """One classified input: a pixel vector in [0,1]^n and its class."""

    pixels: np.ndarray
    label: int


@dataclass(frozen=True)
class Dataset:
    pixels: np.ndarray  # (size, n) float64 in [0, 1]
    labels: np.ndarray  # (size,) int
    name: str
    num_classes: int

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=float)
        labels = np.asarray(self.labels, dtype=int)
        if pixels.ndim != 2 or labels.ndim != 1 or len(pixels) != len(labels):
            raise ValueError("pixels must be (size, n) with one label per row")
        if pixels.size and (pixels.min() < 0.0 or pixels.max() > 1.0):
            bad = int(np.argmax(np.any((pixels < 0.0) | (pixels > 1.0), axis=1)))
            raise ValueError(f"record {bad}: feature outside [0,1]")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            bad = int(np.argmax((labels < 0) | (labels >= self.num_classes)))
            raise ValueError(
                f"record {bad}: label {labels[bad]} outside 0..{self.num_classes - 1}")
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.pixels.shape[1]

    @property
    def size(self) -> int:
        return self.pixels.shape[0]

    def example(self, i: int) -> Example:
        return Example(self.pixels[i], int(self.labels[i]))

    def __iter__(self):
        return (self.example(i) for i in range(self.size))


@dataclass(frozen=True)
class BlobSpec:
    """Isotropic Gaussian clusters, one per class, affinely mapped into [0,1]^n.

    ``geometry_seed`` fixes the cluster means so train/test splits drawn with
    different ``seed`` values share the same geometry.
    """

    classes: int = 3
    dim: int = 2
    per_class: int = 200
    spread: float = 0.05
    seed: int = 0
    geometry_seed: int = 28  # default draw keeps the three clusters well apart
    means: tuple[tuple[float, ...], ...] | None = field(default=None)

    def resolve_means(self) -> np.ndarray:
        if self.means is not None:
            m = np.asarray(self.means, dtype=float)
            if m.shape != (self.classes, self.dim):
                raise ValueError("means must be (classes, dim)")
            return m
        rng = np.random.default_rng(self.geometry_seed)
        return rng.uniform(0.2, 0.8, size=(self.classes, self.dim))


def make_blobs(spec: BlobSpec) -> Dataset:
    """Sample the clusters and min-max map every dimension into [0, 1]."""
    if spec.classes < 2 or spec.per_class < 1:
        raise ValueError("need at least 2 classes and 1 point per cluster")
    means = spec.resolve_means()
    rng = np.random.default_rng(spec.seed)
    pixels = np.concatenate([
        means[c] + spec.spread * rng.standard_normal((spec.per_class, spec.dim))
        for c in range(spec.classes)
    ])
    labels = np.repeat(np.arange(spec.classes), spec.per_class)
    lo = pixels.min(axis=0)
    hi = pixels.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    pixels = (pixels - lo) / span
    return Dataset(pixels, labels, name=f"blobs-c{spec.classes}-d{spec.dim}",
                   num_classes=spec.classes)


def _read_exact(f, count: int, path: str, what: str) -> bytes:
    buf = f.read(count)
    if len(buf) != count:
        raise ValueError(f"{path}: truncated while reading {what}")
    return buf


def load_idx(images_path: str, labels_path: str,
             num_classes: int | None = None) -> Dataset:
    """Read a big-endian IDX image/label pair, scaling bytes into [0, 1]."""
    with open(images_path, "rb") as f:
        magic, count, rows, cols = struct.unpack(
            ">IIII", _read_exact(f, 16, images_path, "header"))
        if magic != IDX_IMAGE_MAGIC:
            raise ValueError(
                f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}")
        raw = _read_exact(f, count * rows * cols, images_path, f"{count} images")
    with open(labels_path, "rb") as f:
        magic, lcount = struct.unpack(">II", _read_exact(f, 8, labels_path, "header"))
        if magic != IDX_LABEL_MAGIC:
            raise ValueError(
                f"{labels_path}: bad magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}")
        if lcount != count:
            raise ValueError(f"{labels_path}: {lcount} labels for {count} images")
        labels = np.frombuffer(_read_exact(f, lcount, labels_path, "labels"),
                               dtype=np.uint8).astype(int)
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols) / 255.0
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels.size else 0
    elif labels.size and labels.max() >= num_classes:
        bad = int(np.argmax(labels >= num_classes))
        raise ValueError(f"{labels_path}: record {bad}: label {labels[bad]} >= {num_classes}")
    return Dataset(pixels, labels, name=f"idx:{images_path}", num_classes=num_classes)


def load_csv(path: str, num_classes: int | None = None) -> Dataset:
    """Read ``label,f0..f{n-1}`` rows; features must already sit in [0, 1]."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or header[0] != "label":
            raise ValueError(f"{path}: expected header starting with 'label'")
        n = len(header) - 1
        labels, rows = [], []
        for rec, row in enumerate(reader):
            if len(row) != n + 1:
                raise ValueError(f"{path}: record {rec}: expected {n + 1} fields, got {len(row)}")
            labels.append(int(row[0]))
            feats = [float(v) for v in row[1:]]
            for j, v in enumerate(feats):
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"{path}: record {rec}: feature f{j}={v} outside [0,1]")
            rows.append(feats)
    labels = np.asarray(labels, dtype=int)
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels.size else 0
    return Dataset(np.asarray(rows, dtype=float), labels, name=f"csv:{path}",
                   num_classes=num_classes)


def _parse_kv(text: str) -> dict[str, str]:
    out = {}
    if text:
        for part in text.split(","):
            key, _, value = part.partition("=")
            if not value:
                raise ValueError(f"expected key=value in dataset spec, got {part!r}")
            out[key.strip()] = value.strip()
    return out


def load_dataset(ref: str) -> Dataset:
    """Resolve a dataset reference string.

    Forms: ``blobs`` / ``blobs:classes=3,dim=2,per_class=200,spread=0.05,seed=0,
    geometry_seed=7``, ``csv:PATH``, ``idx:IMAGES_PATH,LABELS_PATH``.
    """
    kind, _, rest = ref.partition(":")
    if kind == "blobs":
        kv = _parse_kv(rest)
        ints = {k: int(v) for k, v in kv.items() if k != "spread"}
        spread = float(kv["spread"]) if "spread" in kv else BlobSpec.spread
        return make_blobs(BlobSpec(spread=spread, **ints))
    if kind == "csv":
        if not rest:
            raise ValueError("csv reference needs a path: csv:PATH")
        return load_csv(rest)
    if kind == "idx":
        paths = rest.split(",")
        if len(paths) != 2:
            raise ValueError("idx reference needs two paths: idx:IMAGES,LABELS")
        return load_idx(paths[0], paths[1])
    raise ValueError(f"unknown dataset kind {kind!r} in {ref!r}")
