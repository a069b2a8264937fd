"""Logistic-regression conflict resolution for pairs the rule stages declined.

The model works on a five-feature vector per record pair::

    [name edit distance, address Jaccard, |birth date difference| in days,
     SSN equal, phone equal]

Features are z-scored with statistics taken from the training set; the
standardization parameters travel with the model so inference sees exactly
what training saw.  Weights are fitted by full-batch gradient descent on the
mean cross-entropy loss.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .matchers import StageVerdict, jaccard, levenshtein, tokenize_address
from .records import CanonicalRecord

FEATURE_NAMES = ("name_distance", "address_jaccard", "dob_diff_days", "ssn_equal", "phone_equal")
N_FEATURES = len(FEATURE_NAMES)
MODEL_FORMAT_VERSION = 1
PROB_CLIP = 1e-12


class FeatureVector(NamedTuple):
    name_distance: float
    address_jaccard: float
    dob_diff_days: float
    ssn_equal: int
    phone_equal: int


@dataclass(frozen=True)
class LabeledPair:
    features: FeatureVector
    label: int

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 500
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(frozen=True, eq=False)
class LogisticModel:
    """Intercept + five weights over standardized features, and threshold ``tau``."""

    beta: np.ndarray
    tau: float = 0.5
    feature_means: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))
    feature_scales: np.ndarray = field(default_factory=lambda: np.ones(N_FEATURES))

    def __post_init__(self) -> None:
        beta = np.array(self.beta, dtype=np.float64)
        means = np.array(self.feature_means, dtype=np.float64)
        scales = np.array(self.feature_scales, dtype=np.float64)
        if beta.shape != (N_FEATURES + 1,) or means.shape != (N_FEATURES,) or scales.shape != (N_FEATURES,):
            raise ValueError("model parameter vectors have the wrong length")
        if not (np.isfinite(beta).all() and np.isfinite(means).all() and np.isfinite(scales).all()):
            raise ValueError("model parameters must be finite")
        if not (scales > 0).all():
            raise ValueError("feature scales must be strictly positive")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau!r}")
        for arr in (beta, means, scales):
            arr.flags.writeable = False
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "feature_means", means)
        object.__setattr__(self, "feature_scales", scales)

    @classmethod
    def zeros(cls, tau: float = 0.5) -> LogisticModel:
        return cls(np.zeros(N_FEATURES + 1), tau)

    def with_beta(self, beta) -> LogisticModel:
        return replace(self, beta=np.asarray(beta, dtype=np.float64))

    def with_tau(self, tau: float) -> LogisticModel:
        return replace(self, tau=tau)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LogisticModel):
            return NotImplemented
        return (
            self.tau == other.tau
            and np.array_equal(self.beta, other.beta)
            and np.array_equal(self.feature_means, other.feature_means)
            and np.array_equal(self.feature_scales, other.feature_scales)
        )

    # persistence -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "feature_names": list(FEATURE_NAMES),
            "beta": self.beta.tolist(),
            "tau": self.tau,
            "feature_means": self.feature_means.tolist(),
            "feature_scales": self.feature_scales.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> LogisticModel:
        version = doc.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {version!r}")
        return cls(
            beta=doc["beta"],
            tau=doc["tau"],
            feature_means=doc["feature_means"],
            feature_scales=doc["feature_scales"],
        )

    def save(self, path: str | Path) -> None:
        # json writes floats with repr(), which round-trips exactly
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> LogisticModel:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# features and inference
# ---------------------------------------------------------------------------


def extract_features(ri: CanonicalRecord, rj: CanonicalRecord) -> FeatureVector:
    """Pair features; absent inputs map to their "no evidence" value.

    A name missing on exactly one side counts as the full length of the other
    name, since one-sided absence argues against a match.
    """
    ni, nj = ri.full_name, rj.full_name
    if ni is not None and nj is not None:
        name_distance = float(levenshtein(ni, nj))
    elif ni is None and nj is None:
        name_distance = 0.0
    else:
        name_distance = float(len(ni or nj))

    if ri.full_address is not None and rj.full_address is not None:
        addr = jaccard(tokenize_address(ri.full_address), tokenize_address(rj.full_address))
    else:
        addr = 0.0

    if ri.birth_date is not None and rj.birth_date is not None:
        dob = float(abs((ri.birth_date - rj.birth_date).days))
    else:
        dob = 0.0

    ssn_eq = int(ri.ssn is not None and ri.ssn == rj.ssn)
    phone_eq = int(ri.phone_number is not None and ri.phone_number == rj.phone_number)
    return FeatureVector(name_distance, addr, dob, ssn_eq, phone_eq)


def sigmoid(z):
    """Logistic function, evaluated without overflow for large ``|z|``."""
    if np.ndim(z) == 0:
        e = math.exp(-abs(z))
        return 1.0 / (1.0 + e) if z >= 0 else e / (1.0 + e)
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def linear_score(model: LogisticModel, fv: Sequence[float]) -> float:
    """Affine form over standardized features, accumulated left to right."""
    b = model.beta
    z = float(b[0])
    for k in range(N_FEATURES):
        z = z + float(b[k + 1]) * ((float(fv[k]) - float(model.feature_means[k])) / float(model.feature_scales[k]))
    return z


def predict_probability(model: LogisticModel, fv: Sequence[float]) -> float:
    return sigmoid(linear_score(model, fv))


def match_ml(model: LogisticModel, ri: CanonicalRecord, rj: CanonicalRecord) -> StageVerdict:
    p = predict_probability(model, extract_features(ri, rj))
    return StageVerdict(p >= model.tau, p)


# ---------------------------------------------------------------------------
# loss and training
# ---------------------------------------------------------------------------


def as_arrays(data: Sequence[LabeledPair]) -> tuple[np.ndarray, np.ndarray]:
    if len(data) == 0:
        raise ValueError("dataset is empty")
    X = np.array([p.features for p in data], dtype=np.float64)
    y = np.array([p.label for p in data], dtype=np.float64)
    return X, y


def standardize(model: LogisticModel, X: np.ndarray) -> np.ndarray:
    return (X - model.feature_means) / model.feature_scales


def _cost_arrays(beta: np.ndarray, Xs: np.ndarray, y: np.ndarray) -> float:
    h = sigmoid(beta[0] + Xs @ beta[1:])
    h = np.clip(h, PROB_CLIP, 1.0 - PROB_CLIP)
    return float(-np.mean(y * np.log(h) + (1.0 - y) * np.log(1.0 - h)))


def _gradient_arrays(beta: np.ndarray, Xs: np.ndarray, y: np.ndarray) -> np.ndarray:
    r = sigmoid(beta[0] + Xs @ beta[1:]) - y
    m = len(y)
    return np.concatenate(([r.sum() / m], (Xs.T @ r) / m))


def cost(model: LogisticModel, data: Sequence[LabeledPair]) -> float:
    """Mean cross-entropy over standardized features."""
    X, y = as_arrays(data)
    return _cost_arrays(model.beta, standardize(model, X), y)


def gradient(model: LogisticModel, data: Sequence[LabeledPair]) -> np.ndarray:
    """Analytic gradient of :func:`cost` with respect to ``beta``."""
    X, y = as_arrays(data)
    return _gradient_arrays(model.beta, standardize(model, X), y)


def fit_arrays(
    X: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    tau: float = 0.5,
    on_epoch: Callable[[int, float], None] | None = None,
) -> tuple[LogisticModel, np.ndarray]:
    """Train on a feature matrix; returns the model and the cost history.

    ``history[0]`` is the cost at initialization and ``history[e]`` the cost
    after epoch ``e``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != N_FEATURES or len(X) != len(y):
        raise ValueError("feature matrix must have shape (n, 5) matching the labels")
    if len(y) == 0:
        raise ValueError("dataset is empty")
    if not ((y == 0) | (y == 1)).all():
        raise ValueError("labels must be 0 or 1")
    if y.min() == y.max():
        raise ValueError("training data contains a single class")

    order = np.random.Generator(np.random.Philox(cfg.seed)).permutation(len(y))
    X, y = X[order], y[order]

    means = X.mean(axis=0)
    scales = X.std(axis=0)
    scales[scales == 0] = 1.0
    model = LogisticModel(np.zeros(N_FEATURES + 1), tau, means, scales)
    Xs = standardize(model, X)

    beta = np.zeros(N_FEATURES + 1)
    history = np.empty(cfg.epochs + 1)
    history[0] = _cost_arrays(beta, Xs, y)
    for epoch in range(1, cfg.epochs + 1):
        beta = beta - cfg.learning_rate * _gradient_arrays(beta, Xs, y)
        history[epoch] = _cost_arrays(beta, Xs, y)
        if on_epoch is not None:
            on_epoch(epoch, history[epoch])
    return model.with_beta(beta), history


def train(data: Sequence[LabeledPair], cfg: TrainConfig, tau: float = 0.5) -> LogisticModel:
    X, y = as_arrays(data)
    return fit_arrays(X, y, cfg, tau)[0]
