"""Minimal neural primitives: losses, linear heads, seeded SGD with momentum.

Everything here is plain numpy in double precision.  The two losses are
the pairwise matching loss used to train retrieval scoring heads (binary
cross-entropy on sigmoid scores over matching/non-matching pairs) and
the 4-way softmax cross-entropy used by the reasoning classifier.  Both
are written in logit space with the numerically stable identities
``-log sigmoid(z) = softplus(-z)`` and ``logsumexp``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, log_softmax
from scipy.special import softmax as _softmax


def sigmoid(z):
    """Logistic function, numerically stable for any finite input."""
    return expit(z)


def softmax(z, axis=-1):
    """Softmax along ``axis``; rows sum to 1."""
    return _softmax(np.asarray(z, dtype=np.float64), axis=axis)


def softplus(z):
    """log(1 + e^z) without overflow."""
    return np.logaddexp(0.0, z)


def matching_loss(z: np.ndarray, y: np.ndarray, reduction: str = "sum") -> float:
    """Pairwise matching loss on pre-sigmoid scores ``z`` with labels ``y``.

    ``y[i] = 1`` marks a matching (positive) pair, 0 a non-matching one:
    ``L = -sum_pos log sigmoid(z) - sum_neg log(1 - sigmoid(z))``.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    per_pair = y * softplus(-z) + (1.0 - y) * softplus(z)
    if reduction == "sum":
        return float(np.sum(per_pair))
    if reduction == "mean":
        return float(np.mean(per_pair))
    raise ValueError(f"unknown reduction {reduction!r}")


def matching_loss_grad_z(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """d matching_loss (sum reduction) / dz = sigmoid(z) - y."""
    return sigmoid(np.asarray(z, dtype=np.float64)) - np.asarray(y, dtype=np.float64)


def cross_entropy(logits: np.ndarray, gold: np.ndarray, reduction: str = "mean") -> float:
    """Multi-class cross-entropy of ``logits`` (batch, classes) at ``gold`` indices."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    gold = np.atleast_1d(np.asarray(gold, dtype=np.int64))
    log_probs = log_softmax(logits, axis=-1)
    per_sample = -log_probs[np.arange(len(gold)), gold]
    if reduction == "mean":
        return float(np.mean(per_sample))
    if reduction == "sum":
        return float(np.sum(per_sample))
    raise ValueError(f"unknown reduction {reduction!r}")


def cross_entropy_grad_logits(logits: np.ndarray, gold: np.ndarray) -> np.ndarray:
    """d cross_entropy (sum reduction) / dlogits = softmax(logits) - onehot(gold)."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    gold = np.atleast_1d(np.asarray(gold, dtype=np.int64))
    grad = softmax(logits, axis=-1)
    grad[np.arange(len(gold)), gold] -= 1.0
    return grad


def logistic_loss_and_grads(
    u: np.ndarray, y: np.ndarray, weights: np.ndarray, bias: float
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean matching loss of a linear+sigmoid head on rows of ``u``.

    Returns the loss and its exact gradients for {"w", "b"}.
    """
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    z = u @ weights + bias
    loss = matching_loss(z, y, reduction="mean")
    grad_z = matching_loss_grad_z(z, y) / len(y)
    return loss, {"w": u.T @ grad_z, "b": np.array([np.sum(grad_z)])}


def init_weights(rng: np.random.Generator, shape, in_dim: int) -> np.ndarray:
    """Seeded uniform(-1, 1) / sqrt(in_dim) initialization."""
    return rng.uniform(-1.0, 1.0, size=shape) / np.sqrt(in_dim)


class LinearHead:
    """Affine map to a scalar: z = w . x + b."""

    def __init__(self, weights: np.ndarray, bias: float):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.bias)):
            raise ValueError("linear head parameters must be finite")

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator) -> "LinearHead":
        return cls(init_weights(rng, dim, dim), 0.0)

    @classmethod
    def zeros(cls, dim: int) -> "LinearHead":
        return cls(np.zeros(dim), 0.0)

    @property
    def dim(self) -> int:
        return int(self.weights.shape[0])

    def apply(self, x: np.ndarray) -> np.ndarray:
        """x may be (dim,) or (batch, dim); returns scalar or (batch,)."""
        return np.asarray(x, dtype=np.float64) @ self.weights + self.bias

    def to_dict(self) -> dict:
        return {"dim": self.dim, "weights": self.weights.tolist(), "bias": self.bias}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearHead":
        return cls(np.asarray(d["weights"], dtype=np.float64), d["bias"])


class MomentumSGD:
    """Classic momentum update: v <- mu v + g; p <- p - lr v.

    Parameters are registered as named numpy arrays and updated in place.
    """

    def __init__(self, params: dict[str, np.ndarray], lr: float, momentum: float):
        self.params = params
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.velocity = {name: np.zeros_like(p) for name, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, grad in grads.items():
            v = self.velocity[name]
            v *= self.momentum
            v += grad
            self.params[name] -= self.lr * v
