"""Feature matrix + binary label container used by every ML stage."""
from dataclasses import dataclass

import numpy as np

FEATURE_NAMES = ("type", "step", "amount", "oldbalanceOrig", "newbalanceOrig",
                 "oldbalanceDest", "newbalanceDest")


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple = FEATURE_NAMES

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels).astype(np.int8)
        if X.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} rows but {y.shape[0]} labels")
        if X.shape[1] != len(self.feature_names):
            raise ValueError("feature_names does not match the column count")
        if not np.isfinite(X).all():
            raise ValueError("features contain NaN or infinity")
        if y.size and not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def __len__(self):
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def take(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.feature_names)


def train_test_split(ds: Dataset, train_fraction: float = 0.8, seed: int = 0):
    """Stratified, seeded split so that both halves see both classes.

    Rows come back shuffled, which matters for order-sensitive online updates.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(ds.labels == cls)
        idx = idx[rng.permutation(idx.size)]
        cut = int(round(train_fraction * idx.size))
        train_idx.append(idx[:cut])
        test_idx.append(idx[cut:])
    train_idx = np.concatenate(train_idx)
    test_idx = np.concatenate(test_idx)
    train_idx = train_idx[rng.permutation(train_idx.size)]
    test_idx = test_idx[rng.permutation(test_idx.size)]
    return ds.take(train_idx), ds.take(test_idx)
