"""Synthetic cluster datasets, the class-imbalance protocol, and file loaders
(CSV feature tables and IDX image files)."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, ParseError
from .seeding import derive_rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray      # n x input_dim, float64
    labels: np.ndarray        # n class ids
    n_classes: int
    name: str
    test_ids: tuple[int, ...]

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    @property
    def train_ids(self) -> tuple[int, ...]:
        test = set(self.test_ids)
        return tuple(i for i in range(self.n) if i not in test)

    def test_arrays(self):
        ids = list(self.test_ids)
        return self.features[ids], self.labels[ids]


def _separated_unit_means(k: int, dim: int, rng, min_dist: float = 0.9) -> np.ndarray:
    """Random unit vectors kept pairwise at least min_dist apart (best effort)."""
    means = []
    for _ in range(k):
        best, best_d = None, -1.0
        for _attempt in range(200):
            v = rng.standard_normal(dim)
            v /= max(np.linalg.norm(v), 1e-12)
            d = min((np.linalg.norm(v - m) for m in means), default=np.inf)
            if d >= min_dist:
                best = v
                break
            if d > best_d:
                best, best_d = v, d
        means.append(best)
    return np.stack(means)


def generate_blobs(n_classes: int, per_class: int, dim: int, spread: float,
                   seed: int, test_per_class: int = 0, name: str = "blobs") -> Dataset:
    """Gaussian clusters around unit-separated random means, class-major order.

    Optional test rows (same clusters, fresh draws) are appended after the
    training rows and recorded in test_ids.
    """
    if n_classes < 2:
        raise ContractError(f"generate_blobs: need K >= 2, got {n_classes}")
    if per_class < 2:
        raise ContractError(f"generate_blobs: need per_class >= 2, got {per_class}")
    if spread < 0:
        raise ContractError("generate_blobs: spread must be >= 0")
    rng = derive_rng(seed, "blobs")
    means = _separated_unit_means(n_classes, dim, rng)
    blocks, labels = [], []
    for k in range(n_classes):
        blocks.append(means[k] + spread * rng.standard_normal((per_class, dim)))
        labels.extend([k] * per_class)
    n_train = n_classes * per_class
    for k in range(n_classes):
        if test_per_class:
            blocks.append(means[k] + spread * rng.standard_normal((test_per_class, dim)))
            labels.extend([k] * test_per_class)
    features = np.vstack(blocks)
    test_ids = tuple(range(n_train, n_train + n_classes * test_per_class))
    return Dataset(features=features, labels=np.array(labels, dtype=np.intp),
                   n_classes=n_classes, name=name, test_ids=test_ids)


def apply_imbalance(dataset: Dataset, ratios, min_keep: int, seed: int) -> Dataset:
    """Thin the training rows per class by group-assigned keep ratios.

    Classes are partitioned uniformly at random into len(ratios) equal groups;
    each class keeps max(floor(count * ratio), min_keep) uniformly sampled
    rows.  Test rows are untouched.
    """
    ratios = [float(r) for r in ratios]
    if any(not 0.0 < r <= 1.0 for r in ratios):
        raise ConfigError(f"apply_imbalance: ratios must be in (0, 1], got {ratios}")
    if min_keep < 1:
        raise ConfigError("apply_imbalance: min_keep must be >= 1")
    k = dataset.n_classes
    if k % len(ratios) != 0:
        raise ConfigError(f"apply_imbalance: {len(ratios)} ratio groups do not divide "
                          f"{k} classes evenly")
    rng = derive_rng(seed, "imbalance")
    order = rng.permutation(k)
    group_size = k // len(ratios)
    class_ratio = {}
    for g, ratio in enumerate(ratios):
        for c in order[g * group_size:(g + 1) * group_size]:
            class_ratio[int(c)] = ratio

    train_ids = np.array(dataset.train_ids, dtype=np.intp)
    keep_ids: list[int] = []
    for c in range(k):
        rows = train_ids[dataset.labels[train_ids] == c]
        n_keep = max(int(len(rows) * class_ratio[c]), min(min_keep, len(rows)))
        picked = rng.choice(len(rows), size=n_keep, replace=False)
        keep_ids.extend(sorted(int(rows[i]) for i in picked))

    new_ids = keep_ids + list(dataset.test_ids)
    features = dataset.features[new_ids]
    labels = dataset.labels[new_ids]
    test_start = len(keep_ids)
    return Dataset(features=features, labels=labels, n_classes=k,
                   name=f"{dataset.name}-imbalanced",
                   test_ids=tuple(range(test_start, len(new_ids))))


# ---------------------------------------------------------------------------
# CSV: header f0,...,f{d-1},label; float64 text via repr round-trips exactly.


def save_csv(dataset: Dataset, path) -> None:
    dim = dataset.input_dim
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join([f"f{j}" for j in range(dim)] + ["label"]) + "\n")
        for row, label in zip(dataset.features, dataset.labels):
            fh.write(",".join([repr(float(v)) for v in row] + [str(int(label))]) + "\n")


def load_csv(path, n_classes: int | None = None, test_ids=(),
             name: str | None = None) -> Dataset:
    """Parse a feature CSV; malformed input raises ParseError with its byte offset."""
    offset = 0
    with open(path, "rb") as fh:
        raw = fh.read()
    lines = raw.split(b"\n")
    header = lines[0].decode("utf-8", errors="replace").strip()
    cols = header.split(",")
    if len(cols) < 2 or cols[-1] != "label" or \
            any(c != f"f{j}" for j, c in enumerate(cols[:-1])):
        raise ParseError(f"bad CSV header {header!r}, expected f0,...,label", offset=0)
    dim = len(cols) - 1
    offset = len(lines[0]) + 1
    rows, labels = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        text = line.decode("utf-8", errors="replace").strip()
        if not text:
            offset += len(line) + 1
            continue
        parts = text.split(",")
        if len(parts) != dim + 1:
            raise ParseError(f"line {lineno}: expected {dim + 1} fields, got {len(parts)}",
                             offset=offset)
        try:
            rows.append([float(v) for v in parts[:-1]])
            labels.append(int(parts[-1]))
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}", offset=offset) from None
        offset += len(line) + 1
    if not rows:
        raise ParseError("CSV has no data rows", offset=offset)
    labels_arr = np.array(labels, dtype=np.intp)
    if labels_arr.min() < 0:
        raise ParseError("negative class id", offset=0)
    k = int(labels_arr.max()) + 1 if n_classes is None else int(n_classes)
    if labels_arr.max() >= k:
        raise ParseError(f"label {labels_arr.max()} >= n_classes {k}", offset=0)
    return Dataset(features=np.array(rows, dtype=np.float64), labels=labels_arr,
                   n_classes=k, name=name or str(path), test_ids=tuple(test_ids))


# ---------------------------------------------------------------------------
# IDX: big-endian magic + dims header, ubyte payload (MNIST convention).


def _read_exact(fh, n: int, what: str, offset: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ParseError(f"truncated IDX file while reading {what}", offset=offset)
    return data


def load_idx(images_path, labels_path, name: str | None = None,
             test_ids=()) -> Dataset:
    """Images scaled to [0, 1] and flattened; labels from the companion file."""
    with open(images_path, "rb") as fh:
        magic = struct.unpack(">I", _read_exact(fh, 4, "image magic", 0))[0]
        if magic != IDX_IMAGES_MAGIC:
            raise ParseError(f"bad image magic 0x{magic:08x}", offset=0)
        n, rows, cols = struct.unpack(">III", _read_exact(fh, 12, "image dims", 4))
        payload = _read_exact(fh, n * rows * cols, "image data", 16)
        images = np.frombuffer(payload, dtype=np.uint8).reshape(n, rows * cols)
    with open(labels_path, "rb") as fh:
        magic = struct.unpack(">I", _read_exact(fh, 4, "label magic", 0))[0]
        if magic != IDX_LABELS_MAGIC:
            raise ParseError(f"bad label magic 0x{magic:08x}", offset=0)
        n_labels = struct.unpack(">I", _read_exact(fh, 4, "label count", 4))[0]
        if n_labels != n:
            raise ParseError(f"label count {n_labels} != image count {n}", offset=4)
        labels = np.frombuffer(_read_exact(fh, n, "label data", 8), dtype=np.uint8)
    features = images.astype(np.float64) / 255.0
    labels_arr = labels.astype(np.intp)
    k = int(labels_arr.max()) + 1 if n else 0
    return Dataset(features=features, labels=labels_arr, n_classes=k,
                   name=name or str(images_path), test_ids=tuple(test_ids))


def save_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path,
             rows: int, cols: int) -> None:
    """Write ubyte IDX files (images given as n x (rows*cols) uint8)."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n = images.shape[0]
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write(labels.tobytes())


def split_train_test(dataset: Dataset, test_fraction: float, seed: int) -> Dataset:
    """Mark a random test partition on a dataset that has none."""
    if dataset.test_ids:
        return dataset
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = derive_rng(seed, "train_test_split")
    n_test = max(1, int(dataset.n * test_fraction))
    picked = rng.choice(dataset.n, size=n_test, replace=False)
    return Dataset(features=dataset.features, labels=dataset.labels,
                   n_classes=dataset.n_classes, name=dataset.name,
                   test_ids=tuple(int(i) for i in sorted(picked)))
