"""Multiclass softmax regression trained by gradient descent.

Minimizes mean cross-entropy plus an L2 penalty (l2_lambda / 2) * ||W||^2
over the non-intercept weights, using backtracking line search from a zero
initialization.  The objective is convex, so the zero start is safe and the
fit is deterministic.  Logits are shifted by their row maximum before
exponentiation for numerical stability.
"""

import csv
import warnings

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import ConvergenceWarning, NonFiniteFeatureError

_ARMIJO_C = 1e-4
_MIN_STEP = 1e-20


def _check_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d feature matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeatureError("feature matrix contains NaN or infinite entries")
    return X


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stable under large logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _with_intercept(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def objective_and_gradient(weights, X1, labels, l2_lambda, need_grad=True, sample_weight=None):
    """Objective value (and gradient) of the regularized cross-entropy.

    ``X1`` already carries the trailing intercept column; the penalty skips
    the intercept column of ``weights``.  ``sample_weight`` turns the mean
    into a weighted mean (weights normalized to sum 1).
    """
    n = X1.shape[0]
    logits = X1 @ weights.T
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_norm[:, None]
    if sample_weight is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(sample_weight, dtype=float)
        w = w / w.sum()
    ce = -float(w @ log_probs[np.arange(n), labels])
    penalty = 0.5 * l2_lambda * float((weights[:, :-1] ** 2).sum())
    value = ce + penalty
    if not need_grad:
        return value, None
    probs = np.exp(log_probs)
    residual = probs
    residual[np.arange(n), labels] -= 1.0
    grad = (residual * w[:, None]).T @ X1
    grad[:, :-1] += l2_lambda * weights[:, :-1]
    return value, grad


class SoftmaxRegression(BaseEstimator):
    """Probabilistic multiclass linear classifier.

    Parameters
    ----------
    l2_lambda : penalty strength on non-intercept weights.
    tolerance : stop when the gradient infinity norm drops below this.
    max_iters : iteration cap; hitting it marks the model not converged and
        emits a ConvergenceWarning rather than failing.
    random_state : unused by the deterministic solver; kept for interface
        compatibility.
    """

    def __init__(self, l2_lambda=1e-4, tolerance=1e-6, max_iters=5000, random_state=None):
        self.l2_lambda = l2_lambda
        self.tolerance = tolerance
        self.max_iters = max_iters
        self.random_state = random_state

    def fit(self, X, y, n_classes: int | None = None, sample_weight=None) -> "SoftmaxRegression":
        X = _check_matrix(X)
        y = np.asarray(y, dtype=int)
        if y.shape != (X.shape[0],):
            raise ValueError(f"labels shape {y.shape} does not match n={X.shape[0]}")
        if X.shape[0] < 1:
            raise ValueError("need at least one training row")
        k = int(n_classes) if n_classes is not None else int(y.max()) + 1
        if y.min() < 0 or y.max() >= k:
            raise ValueError(f"labels must lie in [0, {k}), got range [{y.min()}, {y.max()}]")
        if sample_weight is not None:
            sample_weight = np.asarray(sample_weight, dtype=float)
            if sample_weight.shape != (X.shape[0],) or np.any(sample_weight < 0):
                raise ValueError("sample_weight must be one nonnegative value per row")
            if sample_weight.sum() <= 0:
                raise ValueError("sample_weight must have positive total")

        X1 = _with_intercept(X)
        weights = np.zeros((k, X1.shape[1]))
        value, grad = objective_and_gradient(
            weights, X1, y, self.l2_lambda, sample_weight=sample_weight
        )
        trace = [value]
        step = 1.0
        iterations = 0
        converged = False
        while iterations < self.max_iters:
            grad_norm = float(np.abs(grad).max())
            if grad_norm <= self.tolerance:
                converged = True
                break
            iterations += 1
            grad_sq = float((grad**2).sum())
            step = min(step * 2.0, 1e8)
            while True:
                candidate = weights - step * grad
                cand_value, _ = objective_and_gradient(
                    candidate, X1, y, self.l2_lambda, need_grad=False,
                    sample_weight=sample_weight,
                )
                if cand_value <= value - _ARMIJO_C * step * grad_sq:
                    break
                step *= 0.5
                if step < _MIN_STEP:
                    break
            if step < _MIN_STEP:
                break
            weights = candidate
            value, grad = objective_and_gradient(
                weights, X1, y, self.l2_lambda, sample_weight=sample_weight
            )
            trace.append(value)

        self.weights_ = weights
        self.n_features_ = X.shape[1]
        self.n_classes_ = k
        self.classes_ = np.arange(k)
        self.converged_ = converged
        self.n_iterations_ = iterations
        self.grad_norm_ = float(np.abs(grad).max())
        self.objective_ = value
        self.objective_trace_ = trace
        if not converged:
            warnings.warn(
                f"gradient norm {self.grad_norm_:.3e} above tolerance "
                f"{self.tolerance:.1e} after {iterations} iterations",
                ConvergenceWarning,
                stacklevel=2,
            )
        return self

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise NotFittedError("SoftmaxRegression must be fitted before predicting")

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        X = _check_matrix(X)
        if X.shape[1] != self.n_features_:
            raise ValueError(
                f"expected {self.n_features_} features, got {X.shape[1]}"
            )
        return softmax(_with_intercept(X) @ self.weights_.T)

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)

    # -- serialization ------------------------------------------------------

    def save_weights_csv(self, path):
        """One CSV row per class; 17 significant digits round-trip exactly."""
        self._check_fitted()
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            for row in self.weights_:
                writer.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_weights_csv(cls, path, **params) -> "SoftmaxRegression":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
        if not rows:
            raise ValueError(f"{path}: empty weight file")
        model = cls(**params)
        weights = np.array(rows)
        model.weights_ = weights
        model.n_classes_ = weights.shape[0]
        model.n_features_ = weights.shape[1] - 1
        model.classes_ = np.arange(weights.shape[0])
        model.converged_ = True
        model.n_iterations_ = 0
        model.grad_norm_ = float("nan")
        model.objective_ = float("nan")
        model.objective_trace_ = []
        return model


def gradient_check(func, point, epsilon: float = 1e-6) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    ``func(point)`` must return (value, gradient).  Coordinates whose
    magnitudes fall below 1e-4 are compared absolutely so that noise on
    near-zero entries does not dominate the ratio.
    """
    if not 0 < epsilon <= 1e-3:
        raise ValueError(f"epsilon must be in (0, 1e-3], got {epsilon}")
    point = np.asarray(point, dtype=float)
    _, grad = func(point)
    grad = np.asarray(grad, dtype=float)
    worst = 0.0
    it = np.nditer(point, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        bumped = point.copy()
        bumped[idx] += epsilon
        up, _ = func(bumped)
        bumped[idx] -= 2 * epsilon
        down, _ = func(bumped)
        numeric = (up - down) / (2 * epsilon)
        denom = max(abs(grad[idx]), abs(numeric), 1e-4)
        worst = max(worst, abs(grad[idx] - numeric) / denom)
    return worst
