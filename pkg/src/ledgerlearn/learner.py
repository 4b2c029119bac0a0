"""Online linear fraud classifiers.

Three update rules share one model type: passive-aggressive (PA-I), the
perceptron and hinge-loss SGD.  Labels are {0, 1} at the API; internally
the update rules work with y in {-1, +1}.  A model predicts 1 iff
``w . scale(x) + b > 0``.
"""
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .canonical import canonical_bytes, hash_obj, sha256_hex
from .dataset import Dataset
from .errors import (ArityMismatch, CorruptModelFile, EmptyBatch, IncompleteMetrics,
                     ModelRegistryMiss, SchemaMismatch)
from .metrics import DEFAULT_BETA, MetricsReport, confusion_matrix, derive_metrics

PAC = "PAC"
PERCEPTRON = "Perceptron"
SGD_HINGE = "SGDHinge"
KINDS = (PAC, PERCEPTRON, SGD_HINGE)

# step size cap, stopping tolerance and epoch cap found by the original grid search
DEFAULT_C = 0.7
DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 1000
DEFAULT_ETA = 0.01
N_ITER_NO_CHANGE = 5

MONETARY_COLUMNS = ("amount", "oldbalanceOrig", "newbalanceOrig", "oldbalanceDest", "newbalanceDest")
MODEL_SCHEMA = "ledgerlearn.model/1"


@dataclass(frozen=True, eq=False)
class FeatureScaler:
    """log1p on selected columns, then min-max onto [0, 1] with frozen bounds."""
    shift: np.ndarray
    scale: np.ndarray
    log_mask: np.ndarray

    @classmethod
    def fit(cls, X, feature_names: Sequence[str], log_columns=MONETARY_COLUMNS) -> "FeatureScaler":
        X = np.asarray(X, dtype=np.float64)
        log_mask = np.array([name in log_columns for name in feature_names])
        Z = np.where(log_mask, np.log1p(np.maximum(X, 0.0)), X)
        lo, hi = Z.min(axis=0), Z.max(axis=0)
        span = hi - lo
        scale = np.where(span > 0, span, 1.0)
        return cls(shift=lo, scale=scale, log_mask=log_mask)

    @property
    def n_features(self) -> int:
        return self.shift.shape[0]

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        Z = np.where(self.log_mask, np.log1p(np.maximum(X, 0.0)), X)
        return (Z - self.shift) / self.scale

    def to_dict(self):
        return {"shift": self.shift.tolist(), "scale": self.scale.tolist(),
                "log_mask": [bool(v) for v in self.log_mask]}

    @classmethod
    def from_dict(cls, d):
        scale = np.asarray(d["scale"], dtype=np.float64)
        if (scale <= 0).any():
            raise SchemaMismatch("scaler scale must be positive")
        return cls(np.asarray(d["shift"], dtype=np.float64), scale,
                   np.asarray(d["log_mask"], dtype=bool))


@dataclass(eq=False)
class LinearModel:
    kind: str
    weights: np.ndarray
    bias: float
    scaler: FeatureScaler
    C: float = DEFAULT_C
    eta: float = DEFAULT_ETA
    epochs_per_batch: int = 1
    version: int = 0
    feature_names: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = float(self.bias)
        if self.weights.shape != (self.scaler.n_features,):
            raise ArityMismatch("weight length differs from scaler feature count")
        if self.C <= 0 or self.eta <= 0 or self.epochs_per_batch < 1:
            raise ValueError("C, eta and epochs_per_batch must be positive")

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "LinearModel":
        return replace(self, weights=self.weights.copy())

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ArityMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        return self.scaler.transform(X) @ self.weights + self.bias

    def predict_many(self, X) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(np.int8)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "weights": self.weights.tolist(), "bias": self.bias,
                "C": self.C, "eta": self.eta, "epochs_per_batch": self.epochs_per_batch,
                "version": self.version, "feature_names": list(self.feature_names),
                "scaler": self.scaler.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "LinearModel":
        return cls(kind=d["kind"], weights=np.asarray(d["weights"], dtype=np.float64),
                   bias=d["bias"], scaler=FeatureScaler.from_dict(d["scaler"]), C=d["C"],
                   eta=d["eta"], epochs_per_batch=d["epochs_per_batch"], version=d["version"],
                   feature_names=tuple(d["feature_names"]))


def predict(model: LinearModel, x) -> int:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ArityMismatch("predict takes a single feature row")
    return int(model.predict_many(x[None, :])[0])


def _signed(labels) -> np.ndarray:
    return np.where(np.asarray(labels) == 1, 1.0, -1.0)


def _epoch(kind, w, b, Z, Y, C, eta):
    """One ordered pass; mutates ``w`` in place, returns (bias, summed hinge loss)."""
    total = 0.0
    for x, y in zip(Z, Y):
        score = float(x @ w) + b
        loss = max(0.0, 1.0 - y * score)
        total += loss
        if kind == PAC:
            if loss > 0.0:
                tau = min(C, loss / (float(x @ x) + 1.0))
                w += (tau * y) * x
                b += tau * y
        elif kind == PERCEPTRON:
            if (score > 0.0) != (y > 0.0):
                w += (eta * y) * x
                b += eta * y
        else:  # hinge subgradient is -y*x inside the margin, 0 outside
            if loss > 0.0:
                w += (eta * y) * x
                b += eta * y
    return b, total


def partial_fit(model: LinearModel, batch: Dataset) -> LinearModel:
    """Train a copy of ``model`` on ``batch`` in the given row order.

    The input model is never touched; the returned candidate carries
    ``version + 1``.
    """
    if len(batch) == 0:
        raise EmptyBatch("cannot train on an empty batch")
    if batch.n_features != model.n_features:
        raise ArityMismatch(f"expected {model.n_features} features, got {batch.n_features}")
    Z = model.scaler.transform(batch.features)
    Y = _signed(batch.labels)
    w = model.weights.copy()
    b = model.bias
    for _ in range(model.epochs_per_batch):
        b, _ = _epoch(model.kind, w, b, Z, Y, model.C, model.eta)
    return replace(model, weights=w, bias=b, version=model.version + 1)


def fit(train: Dataset, kind: str = PAC, C: float = DEFAULT_C, eta: float = DEFAULT_ETA,
        tol: Optional[float] = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, seed: int = 0,
        epochs_per_batch: int = 1) -> LinearModel:
    """Batch-train a fresh model: fit the scaler, then shuffled epochs.

    Training stops when the mean epoch hinge loss has failed to improve on
    the best seen by at least ``tol`` for 5 consecutive epochs, or after
    ``max_iter`` epochs.  The scaler is frozen from here on.
    """
    if len(train) == 0:
        raise EmptyBatch("cannot train on an empty dataset")
    scaler = FeatureScaler.fit(train.features, train.feature_names)
    Z = scaler.transform(train.features)
    Y = _signed(train.labels)
    w = np.zeros(train.n_features)
    b = 0.0
    rng = np.random.default_rng(seed)
    best, stale = np.inf, 0
    for _ in range(max_iter):
        order = rng.permutation(len(train))
        b, total = _epoch(kind, w, b, Z[order], Y[order], C, eta)
        loss = total / len(train)
        if tol is not None:
            if loss > best - tol:
                stale += 1
            else:
                stale = 0
            best = min(best, loss)
            if stale >= N_ITER_NO_CHANGE:
                break
    return LinearModel(kind=kind, weights=w, bias=b, scaler=scaler, C=C, eta=eta,
                       epochs_per_batch=epochs_per_batch, version=0,
                       feature_names=train.feature_names)


def evaluate(model: LinearModel, train: Dataset, test: Dataset, beta: float = DEFAULT_BETA) -> MetricsReport:
    """Training accuracy from ``train``; every other measure from ``test``."""
    if len(train) == 0 or len(test) == 0:
        raise EmptyBatch("evaluation needs non-empty train and test sets")
    train_pred = model.predict_many(train.features)
    test_pred = model.predict_many(test.features)
    report = derive_metrics(confusion_matrix(test.labels, test_pred), beta)
    train_correct = int(np.count_nonzero(train_pred == train.labels))
    test_correct = int(np.count_nonzero(test_pred == test.labels))
    return report.with_accuracies(
        training=train_correct / len(train),
        overall=(train_correct + test_correct) / (len(train) + len(test)))


def model_hash_payload(model: LinearModel, metrics: MetricsReport) -> dict:
    return {"kind": model.kind, "weights": model.weights.tolist(), "bias": model.bias,
            "version": model.version, "precision": metrics.precision, "recall": metrics.recall,
            "fbeta": metrics.fbeta, "fnr": metrics.fnr}


def model_hash(model: LinearModel, metrics: MetricsReport) -> str:
    """SHA-256 over the parameters and the four gating measures."""
    if not metrics.complete:
        raise IncompleteMetrics(f"undefined measures: {', '.join(metrics.undefined)}")
    return hash_obj(model_hash_payload(model, metrics))


# model files

def model_file_bytes(model: LinearModel, metrics: Optional[MetricsReport] = None) -> bytes:
    body = {"model": model.to_dict(), "metrics": None if metrics is None else metrics.to_dict()}
    return canonical_bytes({"schema": MODEL_SCHEMA, "content_hash": hash_obj(body), **body})


def model_filename(model: LinearModel, digest: str) -> str:
    return f"model-{model.version}-{digest[:12]}.json"


def save_model(model: LinearModel, path, metrics: Optional[MetricsReport] = None) -> Path:
    path = Path(path)
    path.write_bytes(model_file_bytes(model, metrics))
    return path


def read_model_file(path):
    """Return ``(model, metrics_or_None)`` after checking the embedded hash."""
    raw = Path(path).read_bytes()
    try:
        doc = json.loads(raw)
    except ValueError as exc:
        raise CorruptModelFile(f"{path}: not valid JSON") from exc
    if not isinstance(doc, dict) or doc.get("schema") != MODEL_SCHEMA:
        raise SchemaMismatch(f"{path}: expected schema {MODEL_SCHEMA}")
    body = {"model": doc.get("model"), "metrics": doc.get("metrics")}
    if doc.get("content_hash") != sha256_hex(canonical_bytes(body)):
        raise CorruptModelFile(f"{path}: content hash mismatch")
    try:
        model = LinearModel.from_dict(body["model"])
        metrics = None if body["metrics"] is None else MetricsReport.from_dict(body["metrics"])
    except (KeyError, TypeError) as exc:
        raise SchemaMismatch(f"{path}: {exc}") from exc
    return model, metrics


def load_model(path) -> LinearModel:
    return read_model_file(path)[0]


class ModelRegistry:
    """Content-addressed store of models keyed by model hash.

    Models are kept in memory and, when ``root`` is given, also written as
    model files so another process can resolve the same hashes.
    """

    def __init__(self, root=None):
        self.root = None if root is None else Path(root)
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
        self._cache = {}

    def put(self, model: LinearModel, metrics: MetricsReport) -> str:
        digest = model_hash(model, metrics)
        self._cache[digest] = (model.copy(), metrics)
        if self.root is not None:
            save_model(model, self.root / model_filename(model, digest), metrics)
        return digest

    def get(self, digest: str):
        if digest in self._cache:
            model, metrics = self._cache[digest]
            return model.copy(), metrics
        if self.root is not None:
            for path in sorted(self.root.glob(f"model-*-{digest[:12]}.json")):
                model, metrics = read_model_file(path)
                if metrics is not None and model_hash(model, metrics) == digest:
                    self._cache[digest] = (model, metrics)
                    return model.copy(), metrics
        raise ModelRegistryMiss(f"no model with hash {digest}")

    def __contains__(self, digest) -> bool:
        try:
            self.get(digest)
        except ModelRegistryMiss:
            return False
        return True
