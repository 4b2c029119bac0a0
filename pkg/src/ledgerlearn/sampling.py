"""SMOTE oversampling of the minority class."""
import math
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.spatial import cKDTree

from .dataset import Dataset
from .errors import EmptyInput, InvalidFraction, SingleClass, TooFewMinority


class ClassCounts(NamedTuple):
    n_minus: int  # majority
    n_plus: int  # minority
    degree: float  # n_plus / n_minus
    minority_label: int


def class_counts(ds: Dataset) -> ClassCounts:
    if len(ds) == 0:
        raise EmptyInput("dataset is empty")
    n1 = int(np.count_nonzero(ds.labels == 1))
    n0 = len(ds) - n1
    if n0 == 0 or n1 == 0:
        raise SingleClass("both classes must be present")
    if n1 <= n0:
        return ClassCounts(n0, n1, n1 / n0, 1)
    return ClassCounts(n1, n0, n0 / n1, 0)


def synthetic_count(counts: ClassCounts, balance_fraction: float) -> int:
    """Rows to generate, ``fraction * (n_minus - n_plus)`` rounded half up."""
    return int(math.floor(balance_fraction * (counts.n_minus - counts.n_plus) + 0.5))


def nearest_minority_neighbors(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest other points for every row (Euclidean)."""
    tree = cKDTree(points)
    _, idx = tree.query(points, k=k + 1)
    idx = np.atleast_2d(idx)
    out = np.empty((points.shape[0], k), dtype=np.int64)
    for i, row in enumerate(idx):
        others = row[row != i]
        out[i] = others[:k]
    return out


def smote_balance(ds: Dataset, balance_fraction: float = 1.0, k: int = 5, seed: int = 0,
                  transform: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> Dataset:
    """Append synthetic minority rows interpolated toward nearest minority neighbours.

    ``transform`` maps raw rows into the space where neighbour distances are
    measured (e.g. a fitted scaler); interpolation itself is done on the raw
    rows, so every synthetic row lies on a segment between two real ones.
    Originals keep their order and come first.
    """
    if not (0 < balance_fraction <= 1) or math.isnan(balance_fraction):
        raise InvalidFraction("balance_fraction must be in (0, 1]")
    if k < 1:
        raise ValueError("k must be a positive integer")
    counts = class_counts(ds)
    n_new = synthetic_count(counts, balance_fraction)
    if n_new == 0:
        return ds
    if counts.n_plus <= k:
        raise TooFewMinority(f"{counts.n_plus} minority rows, need more than k={k}")

    minority = ds.features[ds.labels == counts.minority_label]
    space = minority if transform is None else transform(minority)
    neighbors = nearest_minority_neighbors(space, k)

    rng = np.random.default_rng(seed)
    base = rng.integers(0, minority.shape[0], size=n_new)
    pick = rng.integers(0, k, size=n_new)
    gap = rng.random(n_new)
    x = minority[base]
    x_nn = minority[neighbors[base, pick]]
    synthetic = x + gap[:, None] * (x_nn - x)

    features = np.vstack([ds.features, synthetic])
    labels = np.concatenate([ds.labels, np.full(n_new, counts.minority_label, dtype=np.int8)])
    return Dataset(features, labels, ds.feature_names)
