"""Datasets: synthetic generators, IDX/CSV loaders, splits, label noise, batching."""

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    CountMismatch,
    NonIntegerLabel,
    ParseError,
    SingleClass,
    TruncatedFile,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (N, d) float64
    labels: np.ndarray  # (N,) int64
    num_classes: int
    provenance: str = ""

    def __post_init__(self):
        x = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ValueError(f"{y.shape[0] if y.ndim else 0} labels for {x.shape[0]} samples")
        if len(y) and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if not np.isfinite(x).all():
            raise ValueError("features contain non-finite values")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return len(self.labels)

    def subset(self, index, provenance=None):
        return Dataset(self.features[index], self.labels[index], self.num_classes,
                       provenance if provenance is not None else self.provenance)

    def with_labels(self, labels, provenance=None):
        return Dataset(self.features, labels, self.num_classes,
                       provenance if provenance is not None else self.provenance)


@dataclass(frozen=True)
class Split:
    train: Dataset
    val: Dataset
    test: Dataset


def gen_blobs(n_per_class, num_classes, dim, spread, seed, center_box=5.0):
    """Isotropic Gaussian clusters around centers drawn uniformly from a box."""
    if min(n_per_class, num_classes, dim) < 1:
        raise ValueError("n_per_class, num_classes and dim must all be >= 1")
    if spread < 0:
        raise ValueError(f"spread must be >= 0, got {spread}")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-center_box, center_box, size=(num_classes, dim))
    labels = np.repeat(np.arange(num_classes), n_per_class)
    features = centers[labels] + spread * rng.standard_normal((len(labels), dim))
    return Dataset(features, labels, num_classes,
                   f"blobs(n_per_class={n_per_class}, classes={num_classes}, dim={dim}, "
                   f"spread={spread}, seed={seed})")


def gen_two_moons(n, noise, seed):
    """Two interleaved unit half-circles with Gaussian jitter.

    Class 0 lies on the upper arc centered at the origin, class 1 on the lower
    arc centered at (1, 0.5).
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if noise < 0:
        raise ValueError(f"noise must be >= 0, got {noise}")
    rng = np.random.default_rng(seed)
    n0 = n // 2
    t = rng.uniform(0.0, np.pi, size=n)
    labels = np.r_[np.zeros(n0, dtype=np.int64), np.ones(n - n0, dtype=np.int64)]
    x = np.where(labels == 0, np.cos(t), 1.0 - np.cos(t))
    y = np.where(labels == 0, np.sin(t), 0.5 - np.sin(t))
    features = np.column_stack([x, y]) + noise * rng.standard_normal((n, 2))
    return Dataset(features, labels, 2, f"two_moons(n={n}, noise={noise}, seed={seed})")


def _read_idx(path, magic, ndims):
    with open(path, "rb") as f:
        raw = f.read()
    header = 4 * (1 + ndims)
    if len(raw) < header:
        raise TruncatedFile(f"{path}: header needs {header} bytes, file has {len(raw)}")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagic(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndims}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise TruncatedFile(f"{path}: expected {size} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_idx(images_path, labels_path):
    """Read an IDX image/label pair (the MNIST layout); pixels are scaled by 1/255."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(f"{images.shape[0]} images but {labels.shape[0]} labels")
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    labels = labels.astype(np.int64)
    num_classes = int(labels.max()) + 1 if len(labels) else 1
    return Dataset(features, labels, num_classes, f"idx({images_path}, {labels_path})")


def _parse_rows(path):
    """Numeric rows of a CSV file, skipping '#' comments and one optional header."""
    rows = []
    with open(path, newline="") as f:
        lines = [(i, line) for i, line in enumerate(f, start=1)
                 if line.strip() and not line.lstrip().startswith("#")]
    width = None
    for k, (lineno, line) in enumerate(lines):
        fields = next(csv.reader([line]))
        try:
            values = [float(v) for v in fields]
        except ValueError:
            if k == 0:
                continue  # header
            col = next(i for i, v in enumerate(fields, start=1) if not _is_float(v))
            raise ParseError(f"{path}: non-numeric value {fields[col - 1]!r}",
                             row=lineno, col=col) from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise ParseError(f"{path}: expected {width} fields, got {len(values)}", row=lineno)
        rows.append(values)
    if not rows:
        raise ParseError(f"{path}: no numeric rows")
    return np.array(rows, dtype=np.float64)


def _is_float(v):
    try:
        float(v)
    except ValueError:
        return False
    return True


def read_matrix_csv(path):
    """Read a plain numeric matrix written as CSV ('#' lines are comments)."""
    return _parse_rows(path)


def load_csv(path, label_column):
    """Numeric CSV with class indices in column ``label_column`` (0-based, may be negative)."""
    table = _parse_rows(path)
    ncols = table.shape[1]
    if not -ncols <= label_column < ncols:
        raise ParseError(f"{path}: label column {label_column} out of range for {ncols} columns")
    col = label_column % ncols
    raw = table[:, col]
    bad = np.flatnonzero((raw != np.round(raw)) | (raw < 0))
    if len(bad):
        raise NonIntegerLabel(f"{path}: label {raw[bad[0]]!r} is not a class index",
                              row=int(bad[0]) + 1, col=col + 1)
    labels = raw.astype(np.int64)
    features = np.delete(table, col, axis=1)
    return Dataset(features, labels, int(labels.max()) + 1, f"csv({path})")


def split(ds, fractions, seed):
    """Seeded shuffle, then contiguous train/val/test slices.

    Counts are rounded; the test slice takes the remainder. A part with a
    positive fraction must end up non-empty.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) < 0:
        raise ValueError(f"need three non-negative fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    n = len(ds)
    n_train = int(round(fractions[0] * n))
    n_val = min(int(round(fractions[1] * n)), n - n_train)
    counts = (n_train, n_val, n - n_train - n_val)
    for name, f, c in zip(("train", "val", "test"), fractions, counts):
        if f > 0 and c == 0:
            raise ValueError(f"{name} fraction {f} leaves no samples out of {n}")
        if f == 0 and c != 0:
            raise ValueError(f"{name} fraction is 0 but rounding assigned {c} samples")
    perm = np.random.default_rng(seed).permutation(n)
    a, b = counts[0], counts[0] + counts[1]
    return Split(ds.subset(perm[:a]), ds.subset(perm[a:b]), ds.subset(perm[b:]))


def inject_label_noise(ds, rate, seed):
    """Flip exactly floor(rate * N) labels, each to a uniformly chosen different class."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must lie in [0, 1], got {rate}")
    n_flip = int(np.floor(rate * len(ds)))
    if n_flip == 0:
        return ds
    if ds.num_classes < 2:
        raise SingleClass("label noise needs at least two classes")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(ds), size=n_flip, replace=False)
    labels = ds.labels.copy()
    labels[idx] = (labels[idx] + rng.integers(1, ds.num_classes, size=n_flip)) % ds.num_classes
    return ds.with_labels(labels, f"{ds.provenance} + label_noise(rate={rate}, seed={seed})")


def batches(ds, batch_size, seed, epoch):
    """Yield ``(features, labels)`` mini-batches of a fresh per-epoch shuffle.

    The order depends only on ``(seed, epoch)``; the last batch may be short.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    perm = np.random.default_rng([seed, epoch]).permutation(len(ds))
    for start in range(0, len(ds), batch_size):
        idx = perm[start:start + batch_size]
        yield ds.features[idx], ds.labels[idx]
