"""Dataset ingestion, class filtering, normalization and split selection.

Loaders return raw feature matrices in native units together with the valid
feature box; ``normalize`` rescales by a constant so every in-box vector
(including any feasible poison) lands inside the unit L2 ball the unlearning
bound requires.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .model_core import Dataset

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class RawDataset:
    """Features in native units plus the per-dataset valid box (lo, hi)."""

    features: np.ndarray
    labels: np.ndarray
    feature_bounds: tuple

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        y = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if X.ndim != 2 or y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError("features must be (n, d) with one label per row")
        lo, hi = self.feature_bounds
        if not (np.all(X >= lo) and np.all(X <= hi)):
            raise ValueError(f"features fall outside the declared bounds [{lo}, {hi}]")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_bounds", (float(lo), float(hi)))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class SplitSpec:
    """Disjoint index roles: defender train/test, attacker-controlled poison
    rows (inside train) and the grey-box surrogate pool (outside train)."""

    train_indices: np.ndarray
    test_indices: np.ndarray
    poison_indices: np.ndarray
    surrogate_indices: np.ndarray

    def __post_init__(self):
        for name in ("train_indices", "test_indices", "poison_indices", "surrogate_indices"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        train = set(self.train_indices.tolist())
        if not set(self.poison_indices.tolist()) <= train:
            raise ValueError("poison indices must lie inside the train set")
        if train & set(self.surrogate_indices.tolist()):
            raise ValueError("surrogate indices must be disjoint from the train set")
        if train & set(self.test_indices.tolist()):
            raise ValueError("test indices must be disjoint from the train set")


def _read_be_u32(buf, offset):
    return struct.unpack_from(">I", buf, offset)[0]


def load_idx(image_path, label_path) -> RawDataset:
    """Parse big-endian IDX image/label files (the MNIST container format).

    Pixels are scaled by 1/255 into [0, 1] and images flattened row-wise.
    """
    with open(image_path, "rb") as fh:
        img_buf = fh.read()
    with open(label_path, "rb") as fh:
        lab_buf = fh.read()
    if len(img_buf) < 16 or len(lab_buf) < 8:
        raise ValueError("IDX file is truncated: missing header")
    magic = _read_be_u32(img_buf, 0)
    if magic != IDX_IMAGE_MAGIC:
        raise ValueError(f"bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}")
    n, rows, cols = (_read_be_u32(img_buf, o) for o in (4, 8, 12))
    expected = 16 + n * rows * cols
    if len(img_buf) < expected:
        raise ValueError("IDX image file is truncated")
    magic = _read_be_u32(lab_buf, 0)
    if magic != IDX_LABEL_MAGIC:
        raise ValueError(f"bad label magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}")
    n_labels = _read_be_u32(lab_buf, 4)
    if len(lab_buf) < 8 + n_labels:
        raise ValueError("IDX label file is truncated")
    if n_labels != n:
        raise ValueError(f"image/label count mismatch: {n} images vs {n_labels} labels")
    pixels = np.frombuffer(img_buf, dtype=np.uint8, count=n * rows * cols, offset=16)
    features = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    labels = np.frombuffer(lab_buf, dtype=np.uint8, count=n, offset=8).astype(np.int64)
    return RawDataset(features, labels, (0.0, 1.0))


def load_delimited(features_path, labels_path, delimiter=None,
                   bounds=(-1.0, 1.0)) -> RawDataset:
    """Load a delimited numeric matrix plus one integer label per line.

    ``delimiter=None`` splits on whitespace. Rows must agree on width and
    every value must fall inside ``bounds``.
    """
    rows = []
    with open(features_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(delimiter)
            try:
                rows.append([float(v) for v in fields])
            except ValueError as exc:
                raise ValueError(f"non-numeric field on line {lineno}") from exc
            if len(rows) > 1 and len(rows[-1]) != len(rows[0]):
                raise ValueError(f"ragged row on line {lineno}")
    if not rows:
        raise ValueError("empty feature file")
    features = np.asarray(rows, dtype=np.float64)
    labels = []
    with open(labels_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError as exc:
                raise ValueError(f"non-integer label on line {lineno}") from exc
    if len(labels) != len(rows):
        raise ValueError(
            f"feature/label count mismatch: {len(rows)} rows vs {len(labels)} labels"
        )
    return RawDataset(features, np.asarray(labels, dtype=np.int64), bounds)


def synth_gaussian(n, d, n_classes, separation, seed) -> RawDataset:
    """Class-conditional unit Gaussians with means at separation * e_c,
    clipped into the [0, 1] box. Deterministic per seed."""
    if n_classes > d:
        raise ValueError("need d >= n_classes for distinct class directions")
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, n_classes, size=n)
    means = np.zeros((n_classes, d))
    for c in range(n_classes):
        means[c, c] = separation
    features = means[labels] + rng.standard_normal((n, d))
    np.clip(features, 0.0, 1.0, out=features)
    return RawDataset(features, labels, (0.0, 1.0))


def binarize(raw: RawDataset, class_a, class_b) -> RawDataset:
    """Keep only two classes, relabeling class_a -> +1 and class_b -> -1."""
    mask_a = raw.labels == class_a
    mask_b = raw.labels == class_b
    if not mask_a.any():
        raise ValueError(f"class {class_a} not present")
    if not mask_b.any():
        raise ValueError(f"class {class_b} not present")
    keep = mask_a | mask_b
    labels = np.where(raw.labels[keep] == class_a, 1, -1)
    return RawDataset(raw.features[keep], labels, raw.feature_bounds)


def normalize(raw: RawDataset) -> Dataset:
    """Divide every feature by c = max(|lo|, |hi|) * sqrt(d).

    Any vector inside the valid box then has ||x||_2 <= 1, so feasible
    poisons stay inside the unit ball too. The constant is recorded on the
    returned Dataset. A constant scale keeps attacker gradients linear and
    preserves the box-constraint geometry, unlike per-row normalization.
    """
    lo, hi = raw.feature_bounds
    bound = max(abs(lo), abs(hi))
    if bound == 0.0:
        raise ValueError("degenerate feature bounds")
    c = bound * np.sqrt(raw.d)
    return Dataset(raw.features / c, raw.labels, scale=float(c))


def make_split(n, test_fraction, m_poison, grey_box, surrogate_fraction, seed) -> SplitSpec:
    """Seeded uniform split into test / (surrogate) / train with m_poison
    poison rows picked uniformly inside train."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test = int(round(test_fraction * n))
    n_sur = int(round(surrogate_fraction * n)) if grey_box else 0
    if n_test + n_sur >= n:
        raise ValueError("test + surrogate fractions leave no training data")
    test = perm[:n_test]
    surrogate = perm[n_test:n_test + n_sur]
    train_pool = perm[n_test + n_sur:]
    if m_poison > train_pool.size:
        raise ValueError(
            f"cannot place {m_poison} poison rows in a train set of {train_pool.size}"
        )
    poison = np.sort(train_pool[:m_poison])
    return SplitSpec(
        train_indices=np.sort(train_pool),
        test_indices=np.sort(test),
        poison_indices=poison,
        surrogate_indices=np.sort(surrogate),
    )
