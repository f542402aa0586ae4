"""Datasets and the labeled/unlabeled/val/test split.

Three built-in synthetic families (two moons, a Gaussian grid mixture,
concentric circles) plus CSV loading.  Features from every source are
min-max normalized to the unit box so the perturbation budget means the
same thing everywhere; a degenerate coordinate collapses to 0.5.

Splitting peels off test and validation fractions first, then draws the
labeled pool from the remainder with stratified class counts (largest
remainder, at least one row per class); everything left is the unlabeled
pool, whose true labels are kept purely for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import streams

Array = np.ndarray

SOURCES = ("synthetic_two_moons", "synthetic_gauss_mix", "synthetic_circles", "csv_file")


@dataclass(frozen=True)
class DatasetSpec:
    source: str = "synthetic_two_moons"
    n_points: int = 1000
    dimension: int = 2
    class_count: int = 2
    noise: float = 0.1
    csv_path: str | None = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}, expected one of {SOURCES}")
        if self.n_points < 1:
            raise ValueError(f"n_points must be >= 1, got {self.n_points}")
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        if self.class_count < 2:
            raise ValueError(f"class_count must be >= 2, got {self.class_count}")
        if self.noise < 0.0:
            raise ValueError(f"noise must be >= 0, got {self.noise}")
        if self.source in ("synthetic_two_moons", "synthetic_circles"):
            if self.dimension != 2 or self.class_count != 2:
                raise ValueError(f"{self.source} is a 2-d two-class family")
        if self.source == "csv_file" and not self.csv_path:
            raise ValueError("csv_file source needs csv_path")


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.2
    val_fraction: float = 0.2
    n_labeled: int = 20

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0 or not 0.0 < self.val_fraction < 1.0:
            raise ValueError("test and val fractions must lie in (0, 1)")
        if self.test_fraction + self.val_fraction >= 1.0:
            raise ValueError("test and val fractions leave no training pool")
        if self.n_labeled < 1:
            raise ValueError(f"n_labeled must be >= 1, got {self.n_labeled}")


@dataclass
class DataSplit:
    x_labeled: Array
    y_labeled: Array
    x_unlabeled: Array
    y_unlabeled: Array
    x_val: Array
    y_val: Array
    x_test: Array
    y_test: Array
    n_classes: int

    def counts(self) -> dict:
        return {
            "labeled": self.x_labeled.shape[0],
            "unlabeled": self.x_unlabeled.shape[0],
            "val": self.x_val.shape[0],
            "test": self.x_test.shape[0],
        }


def normalize_unit_box(x: Array) -> Array:
    x = np.asarray(x, dtype=np.float64)
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    span = hi - lo
    out = np.empty_like(x)
    flat = span <= 0.0
    out[:, flat] = 0.5
    good = ~flat
    out[:, good] = (x[:, good] - lo[good]) / span[good]
    return out


def _two_moons(n: int, noise: float, rng) -> tuple[Array, Array]:
    n0 = (n + 1) // 2
    n1 = n - n0
    t0 = np.linspace(0.0, np.pi, n0)
    t1 = np.linspace(0.0, np.pi, max(n1, 1))[:n1]
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    x = np.vstack([upper, lower]) + rng.normal(0.0, noise, size=(n, 2))
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    return x, y


def _gauss_mix(n: int, d: int, C: int, noise: float, rng) -> tuple[Array, Array]:
    # class c sits at the constant vector (c+1)/(C+1); zero noise gives
    # exactly C distinct rows
    y = np.arange(n, dtype=np.int64) % C
    centers = (y[:, None] + 1.0) / (C + 1.0) * np.ones((1, d))
    x = centers + rng.normal(0.0, noise, size=(n, d))
    return x, y


def _circles(n: int, noise: float, rng) -> tuple[Array, Array]:
    n0 = (n + 1) // 2
    n1 = n - n0
    t0 = np.linspace(0.0, 2.0 * np.pi, n0, endpoint=False)
    t1 = np.linspace(0.0, 2.0 * np.pi, max(n1, 1), endpoint=False)[:n1]
    outer = np.column_stack([np.cos(t0), np.sin(t0)])
    inner = 0.5 * np.column_stack([np.cos(t1), np.sin(t1)])
    x = np.vstack([outer, inner]) + rng.normal(0.0, noise, size=(n, 2))
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    return x, y


def load_csv(path: str, class_count: int) -> tuple[Array, Array]:
    """Numeric CSV, features then an integer label column last.  A
    single non-numeric first row is treated as a header."""
    rows = []
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    start = 0
    try:
        [float(tok) for tok in lines[0].split(",")]
    except ValueError:
        start = 1
    width = None
    for lineno, line in enumerate(lines[start:], start=start + 1):
        toks = line.split(",")
        if width is None:
            width = len(toks)
            if width < 2:
                raise ValueError(f"{path}: need at least one feature and a label column")
        elif len(toks) != width:
            raise ValueError(f"{path}: row {lineno} has {len(toks)} fields, expected {width}")
        try:
            vals = [float(tok) for tok in toks]
        except ValueError:
            raise ValueError(f"{path}: row {lineno} has a non-numeric field") from None
        if any(not np.isfinite(v) for v in vals):
            raise ValueError(f"{path}: row {lineno} has a non-finite value")
        label = vals[-1]
        if label != int(label) or not 0 <= int(label) < class_count:
            raise ValueError(
                f"{path}: row {lineno} label {label} outside [0, {class_count})")
        rows.append(vals)
    x = np.asarray([r[:-1] for r in rows], dtype=np.float64)
    y = np.asarray([int(r[-1]) for r in rows], dtype=np.int64)
    return x, y


def load_dataset(spec: DatasetSpec, seed: int) -> tuple[Array, Array]:
    """Feature rows in [0, 1]^d and integer labels."""
    rng = streams.stream(seed, "data-split", 0)
    if spec.source == "synthetic_two_moons":
        x, y = _two_moons(spec.n_points, spec.noise, rng)
    elif spec.source == "synthetic_gauss_mix":
        x, y = _gauss_mix(spec.n_points, spec.dimension, spec.class_count, spec.noise, rng)
    elif spec.source == "synthetic_circles":
        x, y = _circles(spec.n_points, spec.noise, rng)
    else:
        x, y = load_csv(spec.csv_path, spec.class_count)
    if y.max(initial=0) >= spec.class_count:
        raise ValueError("labels exceed class_count")
    return normalize_unit_box(x), y


def _stratified_counts(pool_labels: Array, n_labeled: int, n_classes: int) -> Array:
    present, counts = np.unique(pool_labels, return_counts=True)
    if len(present) < n_classes:
        missing = sorted(set(range(n_classes)) - set(present.tolist()))
        raise ValueError(f"classes {missing} absent from the training pool")
    if n_labeled < n_classes:
        raise ValueError(f"n_labeled={n_labeled} cannot cover {n_classes} classes")
    pool_size = pool_labels.shape[0]
    if n_labeled > pool_size:
        raise ValueError(f"n_labeled={n_labeled} exceeds the pool of {pool_size}")
    by_class = np.zeros(n_classes, dtype=np.int64)
    by_class[present] = counts
    quota = n_labeled * by_class / pool_size
    take = np.floor(quota).astype(np.int64)
    # largest remainder, lowest class id on ties
    remainder = quota - take
    order = sorted(range(n_classes), key=lambda c: (-remainder[c], c))
    for c in order:
        if take.sum() >= n_labeled:
            break
        if take[c] < by_class[c]:
            take[c] += 1
    while take.sum() < n_labeled:
        for c in order:
            if take[c] < by_class[c]:
                take[c] += 1
                break
    # every class contributes at least one row
    for c in range(n_classes):
        if take[c] == 0:
            donor = int(np.argmax(take))
            take[donor] -= 1
            take[c] = 1
    return take


def make_split(x: Array, y: Array, spec: SplitSpec, seed: int,
               n_classes: int) -> DataSplit:
    """Test and val fractions first, then a stratified labeled pool from
    the permuted remainder; unlabeled is whatever is left."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = x.shape[0]
    if y.shape != (n,):
        raise ValueError("x and y row counts differ")
    rng = streams.stream(seed, "data-split", 1)
    perm = rng.permutation(n)
    n_test = int(round(spec.test_fraction * n))
    n_val = int(round(spec.val_fraction * n))
    if n_test + n_val >= n:
        raise ValueError("test and val splits consume every row")
    test_idx = perm[:n_test]
    val_idx = perm[n_test:n_test + n_val]
    pool_idx = perm[n_test + n_val:]
    take = _stratified_counts(y[pool_idx], spec.n_labeled, n_classes)
    labeled_mask = np.zeros(pool_idx.shape[0], dtype=bool)
    seen = np.zeros(n_classes, dtype=np.int64)
    for pos, i in enumerate(pool_idx):
        c = y[i]
        if seen[c] < take[c]:
            labeled_mask[pos] = True
            seen[c] += 1
    labeled_idx = pool_idx[labeled_mask]
    unlabeled_idx = pool_idx[~labeled_mask]
    return DataSplit(
        x_labeled=x[labeled_idx], y_labeled=y[labeled_idx],
        x_unlabeled=x[unlabeled_idx], y_unlabeled=y[unlabeled_idx],
        x_val=x[val_idx], y_val=y[val_idx],
        x_test=x[test_idx], y_test=y[test_idx],
        n_classes=n_classes,
    )
