"""Supervised contextual proxy stacked on top of any base proxy.

Builds a feature row from the base proxy's probabilities, the record's
standardized covariates, and the binary context, then fits a softmax
regression to ground-truth race labels.  Only query access to the base
proxy is used: nothing is mutated or introspected.
"""

import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .domain import ContextualProxy, RaceDistribution, RaceSet, check_context
from .errors import InconsistentCovariateArityError
from .learner import SoftmaxRegression
from .tables import SupplementalDataset, apply_standardization, standardize_covariates


@dataclass(frozen=True)
class FeatureLayout:
    """Declared feature ordering: K base probabilities, p covariates, context."""

    n_classes: int
    n_covariates: int

    @property
    def width(self) -> int:
        return self.n_classes + self.n_covariates + 1


class MicsgProxy(ContextualProxy, BaseEstimator):
    """Machine-learned contextual proxy over base-proxy features.

    The base proxy is queried at whatever context the feature row declares,
    so counterfactual-context queries stay well-defined even when the base is
    itself contextual.  Base probabilities are not standardized (they are
    already in [0, 1]); only user covariates pass through the fitted
    transform, and the context coordinate enters as raw 0/1.
    """

    def __init__(
        self,
        base_proxy: ContextualProxy,
        l2_lambda: float = 1e-4,
        tolerance: float = 1e-6,
        max_iters: int = 5000,
    ):
        self.base_proxy = base_proxy
        self.l2_lambda = l2_lambda
        self.tolerance = tolerance
        self.max_iters = max_iters

    @property
    def race_set(self) -> RaceSet:
        return self.base_proxy.race_set

    def fit(self, train: SupplementalDataset) -> "MicsgProxy":
        train.require_labels()
        standardized, means, stds = standardize_covariates(train)
        k = len(self.race_set)
        self.cov_means_ = means
        self.cov_stds_ = stds
        self.layout_ = FeatureLayout(n_classes=k, n_covariates=train.covariate_dim)
        features = self._features_observed(standardized)
        labels = train.race_indices(self.race_set)
        self.learner_ = SoftmaxRegression(
            l2_lambda=self.l2_lambda,
            tolerance=self.tolerance,
            max_iters=self.max_iters,
        ).fit(features, labels, n_classes=k, sample_weight=train.weights)
        return self

    def _check_fitted(self):
        if not hasattr(self, "learner_"):
            raise NotFittedError("MicsgProxy must be fitted before predicting")

    def _features_observed(self, standardized: SupplementalDataset) -> np.ndarray:
        """Feature matrix at each record's observed context (training path)."""
        rows = np.empty((len(standardized), self.layout_.width))
        for y in (0, 1):
            mask = standardized.contexts == y
            if not np.any(mask):
                continue
            sub = standardized.subset(mask)
            base = self.base_proxy.evaluate(sub, y)
            rows[mask] = np.hstack(
                [base, sub.covariates, np.full((len(sub), 1), float(y))]
            )
        return rows

    def _features_at(self, dataset: SupplementalDataset, context: int) -> np.ndarray:
        standardized = apply_standardization(dataset, self.cov_means_, self.cov_stds_)
        base = self.base_proxy.evaluate(standardized, context)
        return np.hstack(
            [
                base,
                standardized.covariates,
                np.full((len(dataset), 1), float(context)),
            ]
        )

    def assemble_features(self, record, context_override=None) -> np.ndarray:
        """Feature row for one record, optionally at a counterfactual context."""
        self._check_fitted()
        y = record.context if context_override is None else check_context(context_override)
        if len(record.covariates) != self.layout_.n_covariates:
            raise InconsistentCovariateArityError(
                f"record has {len(record.covariates)} covariates, layout expects "
                f"{self.layout_.n_covariates}"
            )
        base = self.base_proxy.evaluate_one(record, y).probs
        covs = (np.asarray(record.covariates) - self.cov_means_) / self.cov_stds_
        return np.concatenate([base, covs, [float(y)]])

    def evaluate_one(self, record, context) -> RaceDistribution:
        features = self.assemble_features(record, context_override=context)
        return RaceDistribution(self.learner_.predict_proba(features)[0])

    def evaluate(self, dataset: SupplementalDataset, context) -> np.ndarray:
        self._check_fitted()
        y = check_context(context)
        if dataset.covariate_dim != self.layout_.n_covariates:
            raise InconsistentCovariateArityError(
                f"dataset has {dataset.covariate_dim} covariates, layout expects "
                f"{self.layout_.n_covariates}"
            )
        if len(dataset) == 0:
            return np.zeros((0, len(self.race_set)))
        return self.learner_.predict_proba(self._features_at(dataset, y))

    # -- serialization -------------------------------------------------------

    def save_json(self, path, base_spec: str = ""):
        """Persist the learned head; the base proxy is reattached at load time."""
        self._check_fitted()
        payload = {
            "schema": 1,
            "base_spec": base_spec,
            "race_categories": list(self.race_set),
            "n_covariates": self.layout_.n_covariates,
            "cov_means": [float(v) for v in self.cov_means_],
            "cov_stds": [float(v) for v in self.cov_stds_],
            "l2_lambda": self.l2_lambda,
            "tolerance": self.tolerance,
            "max_iters": self.max_iters,
            "weights": [[float(v) for v in row] for row in self.learner_.weights_],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load_json(cls, path, base_proxy: ContextualProxy) -> "MicsgProxy":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        if list(base_proxy.race_set) != payload["race_categories"]:
            raise ValueError("base proxy race categories do not match the saved model")
        proxy = cls(
            base_proxy,
            l2_lambda=payload["l2_lambda"],
            tolerance=payload["tolerance"],
            max_iters=payload["max_iters"],
        )
        k = len(payload["race_categories"])
        proxy.cov_means_ = np.array(payload["cov_means"], dtype=float)
        proxy.cov_stds_ = np.array(payload["cov_stds"], dtype=float)
        proxy.layout_ = FeatureLayout(n_classes=k, n_covariates=payload["n_covariates"])
        learner = SoftmaxRegression(
            l2_lambda=payload["l2_lambda"],
            tolerance=payload["tolerance"],
            max_iters=payload["max_iters"],
        )
        weights = np.array(payload["weights"], dtype=float)
        learner.weights_ = weights
        learner.n_classes_ = weights.shape[0]
        learner.n_features_ = weights.shape[1] - 1
        learner.classes_ = np.arange(weights.shape[0])
        learner.converged_ = True
        learner.n_iterations_ = 0
        learner.grad_norm_ = float("nan")
        learner.objective_ = float("nan")
        learner.objective_trace_ = []
        proxy.learner_ = learner
        return proxy

    @staticmethod
    def read_base_spec(path) -> str:
        """Base-proxy spec string recorded in a saved model file."""
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh).get("base_spec", "")
