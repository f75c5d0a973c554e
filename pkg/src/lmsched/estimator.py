"""Output-length estimation from rule features.

Three estimators of increasing capacity are provided: a least-squares
weighted rule, and a small rectifier MLP trained with mini-batch Adam on
mean squared error. :func:`profile_offline` trains the MLP and derives the
offload threshold as a nearest-rank quantile of its own training-set
predictions.
"""
from __future__ import annotations

import base64
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .textfeat import FeatureVector

DEFAULT_LAYER_DIMS = (6, 100, 200, 200, 100, 1)
RIDGE = 1e-8
MAX_CONDITION = 1e12


class DegenerateDesign(ValueError):
    """The design matrix cannot support a least-squares fit."""


class NonFiniteLoss(ArithmeticError):
    """Training diverged (NaN or inf loss)."""


class EmptyScores(ValueError):
    pass


@dataclass(frozen=True)
class TrainRecord:
    features: FeatureVector
    target_len: int

    def __post_init__(self):
        if self.target_len < 1:
            raise ValueError(f"target_len must be >= 1, got {self.target_len}")


@dataclass(frozen=True)
class UncertaintyScore:
    value: float
    normalized: float

    @classmethod
    def from_value(cls, value: float, u_max: float) -> "UncertaintyScore":
        if u_max <= 0:
            raise ValueError("u_max must be positive")
        value = max(0.0, float(value))
        return cls(value, min(1.0, value / u_max))


def design_matrix(records: Sequence[TrainRecord]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([r.features.as_tuple() for r in records], dtype=np.float64).reshape(len(records), -1)
    y = np.array([r.target_len for r in records], dtype=np.float64)
    return X, y


# ----------------------------------------------------------- weighted rule


@dataclass(frozen=True)
class WeightedRule:
    coefficients: tuple
    intercept: float

    def predict(self, features: FeatureVector | Sequence[float]) -> float:
        return float(np.dot(self.coefficients, tuple(features)) + self.intercept)

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ np.asarray(self.coefficients) + self.intercept


def fit_weighted_rule(records: Sequence[TrainRecord]) -> WeightedRule:
    """Least squares through the damped normal equations.

    The conditioning check runs on the Jacobi-scaled normal matrix so an
    all-zero feature column (weight pinned to 0 by the damping) is not
    mistaken for collinearity.
    """
    if len(records) < 7:
        raise DegenerateDesign(f"need at least 7 records, got {len(records)}")
    X, y = design_matrix(records)
    if not np.any(X):
        raise DegenerateDesign("feature matrix is all zero")
    A = np.hstack([X, np.ones((len(X), 1))])
    normal = A.T @ A + RIDGE * np.eye(A.shape[1])
    scale = 1.0 / np.sqrt(np.diag(normal))
    cond = np.linalg.cond(normal * np.outer(scale, scale))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise DegenerateDesign(f"normal matrix is numerically singular (condition {cond:.3g})")
    beta = np.linalg.solve(normal, A.T @ y)
    return WeightedRule(tuple(float(b) for b in beta[:-1]), float(beta[-1]))


# --------------------------------------------------------------------- MLP


def _relu(x):
    return np.maximum(x, 0.0)


class MlpRegressor:
    """Rectifier MLP with a linear scalar output.

    ``weights[i]`` has shape ``(layer_dims[i], layer_dims[i + 1])``.
    """

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray], rng_seed: int = 0):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need one bias per weight matrix")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: bias shape {b.shape} does not match weights {w.shape}")
            if i and weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: input dim {w.shape[0]} != previous output {weights[i - 1].shape[1]}")
        if weights[-1].shape[1] != 1:
            raise ValueError("output layer must have a single unit")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.rng_seed = rng_seed

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @classmethod
    def initialize(cls, layer_dims: Sequence[int] = DEFAULT_LAYER_DIMS, seed: int = 0) -> "MlpRegressor":
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, rng_seed=seed)

    @classmethod
    def zeros(cls, layer_dims: Sequence[int] = DEFAULT_LAYER_DIMS) -> "MlpRegressor":
        dims = list(zip(layer_dims[:-1], layer_dims[1:]))
        return cls([np.zeros(d) for d in dims], [np.zeros(d[1]) for d in dims])

    def copy(self) -> "MlpRegressor":
        return MlpRegressor([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.rng_seed)

    def forward(self, X: np.ndarray) -> np.ndarray:
        h = np.atleast_2d(np.asarray(X, dtype=np.float64))
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = _relu(h)
        return h[:, 0]

    def loss_and_grads(self, X: np.ndarray, y: np.ndarray):
        """Mean squared error and its gradient for every weight and bias."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64)
        acts = [X]
        pre = []
        h = X
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = _relu(z) if i < last else z
            acts.append(h)
        err = acts[-1][:, 0] - y
        loss = float(np.mean(err**2))
        delta = (2.0 / len(y)) * err[:, None]
        gw = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        for i in range(last, -1, -1):
            gw[i] = acts[i].T @ delta
            gb[i] = delta.sum(axis=0)
            if i:
                delta = (delta @ self.weights[i].T) * (pre[i - 1] > 0)
        return loss, gw, gb

    def mse(self, X: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean((self.forward(X) - np.asarray(y, dtype=np.float64)) ** 2))

    # Weights are stored little-endian float64, row-major, base64-encoded.
    def to_dict(self) -> dict:
        def enc(a):
            return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")

        return {
            "layer_dims": list(self.layer_dims),
            "rng_seed": self.rng_seed,
            "weights": [enc(w) for w in self.weights],
            "biases": [enc(b) for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MlpRegressor":
        dims = data["layer_dims"]

        def dec(s, shape):
            return np.frombuffer(base64.b64decode(s), dtype="<f8").reshape(shape).astype(np.float64)

        weights = [dec(s, (a, b)) for s, a, b in zip(data["weights"], dims[:-1], dims[1:])]
        biases = [dec(s, (b,)) for s, b in zip(data["biases"], dims[1:])]
        return cls(weights, biases, rng_seed=int(data.get("rng_seed", 0)))


def mlp_predict(model: MlpRegressor, features: FeatureVector | Sequence[float], u_max: float) -> UncertaintyScore:
    raw = float(model.forward(np.asarray(tuple(features), dtype=np.float64)[None, :])[0])
    return UncertaintyScore.from_value(raw, u_max)


@dataclass
class _Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class _Sgd:
    lr: float

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def mlp_train(
    model: MlpRegressor,
    X: np.ndarray,
    y: np.ndarray,
    epochs: int = 100,
    lr: float = 1e-4,
    batch_size: int = 32,
    seed: int = 0,
    optimizer: str = "adam",
) -> list[float]:
    """Train ``model`` in place; return the full-data MSE after each epoch."""
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("need at least one record")
    opt = _Adam(lr) if optimizer == "adam" else _Sgd(lr)
    rng = np.random.default_rng(seed)
    params = model.weights + model.biases
    losses = []
    for _ in range(epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), batch_size):
            idx = order[start : start + batch_size]
            loss, gw, gb = model.loss_and_grads(X[idx], y[idx])
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss}")
            opt.step(params, gw + gb)
        epoch_loss = model.mse(X, y)
        if not math.isfinite(epoch_loss):
            raise NonFiniteLoss(f"loss became {epoch_loss}")
        losses.append(epoch_loss)
    return losses


def train_with_reseed(
    X: np.ndarray,
    y: np.ndarray,
    layer_dims: Sequence[int] = DEFAULT_LAYER_DIMS,
    epochs: int = 100,
    lr: float = 1e-4,
    batch_size: int = 32,
    seed: int = 0,
    retries: int = 3,
    optimizer: str = "adam",
) -> tuple[MlpRegressor, list[float], float]:
    """Initialize and train, re-initializing on a new seed when the final
    loss ends above the initial one (up to ``retries`` extra attempts).

    Returns the model, its loss curve and the loss of the untrained model.
    """
    for attempt in range(retries + 1):
        model = MlpRegressor.initialize(layer_dims, seed=seed + attempt)
        initial = model.mse(X, y)
        losses = mlp_train(model, X, y, epochs, lr, batch_size, seed + attempt, optimizer)
        if len(y) < 32 or not losses or losses[-1] <= min(initial, losses[0]):
            break
    return model, losses, initial


# ---------------------------------------------------------------- quantile


def nearest_rank_index(n: int, k: float) -> int:
    # k as the decimal it was written as: ceil(0.9 * 10) must be 9, not 10
    return min(n - 1, max(0, math.ceil(Fraction(repr(float(k))) * n) - 1))


def quantile_threshold(scores: Sequence[float], k: float) -> float:
    """Nearest-rank k-quantile: the ``ceil(k * n)``-th smallest score."""
    values = np.asarray(scores, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyScores("cannot take a quantile of no scores")
    if not 0.0 < k < 1.0:
        raise ValueError(f"k must lie in (0, 1), got {k}")
    idx = nearest_rank_index(values.size, k)
    return float(np.partition(values, idx)[idx])


# ------------------------------------------------------- offline profiling


@dataclass
class EstimatorProfile:
    model: MlpRegressor
    tau: float
    u_max: float
    k: float
    lexicon_version: str
    losses: list = field(default_factory=list)
    use_length_feature: bool = False

    def score(self, features: Sequence[float]) -> UncertaintyScore:
        return mlp_predict(self.model, features, self.u_max)

    def score_many(self, X: np.ndarray) -> np.ndarray:
        return np.maximum(self.model.forward(X), 0.0)

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "tau": self.tau,
            "u_max": self.u_max,
            "k": self.k,
            "lexicon_version": self.lexicon_version,
            "use_length_feature": self.use_length_feature,
            "losses": list(self.losses),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EstimatorProfile":
        return cls(
            model=MlpRegressor.from_dict(data["model"]),
            tau=float(data["tau"]),
            u_max=float(data["u_max"]),
            k=float(data["k"]),
            lexicon_version=data["lexicon_version"],
            losses=[float(v) for v in data.get("losses", [])],
            use_length_feature=bool(data.get("use_length_feature", False)),
        )


def profile_offline(
    X: np.ndarray,
    y: np.ndarray,
    k: float = 0.9,
    lexicon_version: str = "unversioned",
    layer_dims: Sequence[int] | None = None,
    epochs: int = 100,
    lr: float = 1e-4,
    batch_size: int = 32,
    seed: int = 0,
    use_length_feature: bool = False,
) -> EstimatorProfile:
    """Train the length regressor, then freeze ``u_max`` and the threshold.

    ``X`` rows are rule features (optionally with input length appended),
    ``y`` the observed output lengths.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if len(X) == 0:
        raise ValueError("need at least one training record")
    dims = tuple(layer_dims or (X.shape[1],) + DEFAULT_LAYER_DIMS[1:])
    model, losses, _ = train_with_reseed(X, y, dims, epochs, lr, batch_size, seed)
    preds = np.maximum(model.forward(X), 0.0)
    u_max = float(preds.max())
    if u_max <= 0.0:
        raise DegenerateDesign("trained model predicts zero length for every record")
    tau = quantile_threshold(preds, k)
    return EstimatorProfile(model, tau, u_max, k, lexicon_version, losses, use_length_feature)
