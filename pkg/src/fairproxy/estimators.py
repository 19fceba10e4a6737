"""Group positive-rate estimators and disparity reports.

Three routes to the per-race positive rate Pr[outcome = 1 | race]:

* ``true_positive_rate`` counts ground-truth labels directly.
* ``weighted_estimate`` weights outcomes by proxy probabilities.
* ``bayes_estimates`` combines counterfactual contextual-proxy sums with the
  observed context counts through a ratio; the inner sums deliberately run
  over *all* records at both contexts, not only the records observed at the
  matching context.  That reading is pinned by a dedicated test because it is
  easy to get wrong.
"""

from dataclasses import dataclass, field

import numpy as np

from .domain import ContextualProxy, RaceSet, check_context
from .errors import (
    EmptyContextError,
    EmptyGroupError,
    ZeroDenominatorError,
    ZeroMassError,
)
from .tables import SupplementalDataset


def true_positive_rate(dataset: SupplementalDataset, race: str) -> float:
    """Empirical Pr[outcome = 1 | race] from ground-truth labels."""
    dataset.require_labels()
    w = dataset.effective_weights()
    in_group = np.array([r == race for r in dataset.races])
    total = float(w[in_group].sum())
    if total <= 0:
        raise EmptyGroupError(f"no record carries race label {race!r}")
    positive = float(w[in_group & (dataset.contexts == 1)].sum())
    return positive / total


def weighted_estimate(proxy_probs, outcomes, weights=None) -> float:
    """Proxy-probability-weighted positive rate for one race.

    ``proxy_probs`` holds the proxy's probability of the race in question for
    each record; ``outcomes`` the binary decisions.
    """
    rho = np.asarray(proxy_probs, dtype=float)
    f = np.asarray(outcomes, dtype=float)
    if rho.shape != f.shape:
        raise ValueError(f"shape mismatch: {rho.shape} vs {f.shape}")
    w = np.ones_like(rho) if weights is None else np.asarray(weights, dtype=float)
    denom = float((w * rho).sum())
    if denom <= 0:
        raise ZeroMassError("proxy assigns zero total mass to the requested race")
    return float((w * rho * f).sum() / denom)


def bayes_estimates(proxy: ContextualProxy, dataset: SupplementalDataset) -> np.ndarray:
    """Ratio-estimator positive rates for every race at once.

    Evaluates the proxy counterfactually at both contexts for every record
    and returns the (K,) vector of estimates.
    """
    omega0 = proxy.evaluate(dataset, 0)
    omega1 = proxy.evaluate(dataset, 1)
    n0, n1 = dataset.context_counts()
    return bayes_estimates_from_scores(omega0, omega1, n0, n1, dataset.effective_weights())


def bayes_estimates_from_scores(omega0, omega1, n0, n1, weights=None) -> np.ndarray:
    """Core ratio arithmetic on precomputed per-record proxy matrices.

    ``omega0`` and ``omega1`` are (n, K) proxy outputs at contexts 0 and 1 for
    *all* n records; ``n0``/``n1`` are the observed context totals.  Races
    whose denominator vanishes get NaN; callers decide whether that is fatal.
    """
    omega0 = np.asarray(omega0, dtype=float)
    omega1 = np.asarray(omega1, dtype=float)
    w = (
        np.ones(omega0.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    )
    sum1 = w @ omega1
    sum0 = w @ omega0
    numerator = sum1 * n1
    denominator = sum0 * n0 + sum1 * n1
    out = np.full(omega0.shape[1], np.nan)
    ok = denominator > 0
    out[ok] = numerator[ok] / denominator[ok]
    return out


def bayes_estimate(proxy: ContextualProxy, dataset: SupplementalDataset, race: str) -> float:
    """Ratio-estimator positive rate for one race."""
    k = proxy.race_set.index(race)
    value = bayes_estimates(proxy, dataset)[k]
    if np.isnan(value):
        raise ZeroDenominatorError(
            f"proxy assigns zero mass to race {race!r} at both contexts"
        )
    return float(value)


def weighted_composition(
    proxy: ContextualProxy, dataset: SupplementalDataset, race: str, context
) -> float:
    """Share of the context-y subpopulation assigned to a race by a proxy.

    Averages the proxy's observed-context output over the records whose
    outcome equals ``context``; the non-contextual analogue of a composition
    estimate Pr[race | outcome].
    """
    y = check_context(context)
    k = proxy.race_set.index(race)
    mask = dataset.contexts == y
    if not np.any(mask):
        raise EmptyContextError(f"no record has context {y}")
    sub = dataset.subset(mask)
    probs = proxy.evaluate(sub, y)[:, k]
    w = sub.effective_weights()
    return float((w * probs).sum() / w.sum())


def bayes_composition(
    proxy: ContextualProxy, dataset: SupplementalDataset, race: str, context
) -> float:
    """Composition estimate Pr[race | outcome = y] from counterfactual queries.

    The mean of the contextual proxy at context y over *all* records; for a
    mean-consistent proxy this converges to the true composition.
    """
    y = check_context(context)
    k = proxy.race_set.index(race)
    probs = proxy.evaluate(dataset, y)[:, k]
    w = dataset.effective_weights()
    return float((w * probs).sum() / w.sum())


@dataclass(frozen=True, eq=False)
class DisparityReport:
    """Per-race positive-rate estimates with provenance and pairwise gaps."""

    race_set: RaceSet
    kind: str
    estimates: np.ndarray
    disparity: np.ndarray
    n: float
    n_context1: float
    n_context0: float
    group_counts: np.ndarray | None = field(default=None)

    def estimate(self, race: str) -> float:
        return float(self.estimates[self.race_set.index(race)])

    def max_disparity(self) -> float:
        return float(self.disparity.max()) if self.disparity.size else 0.0

    def to_dict(self) -> dict:
        per_race = {}
        for i, label in enumerate(self.race_set):
            entry = {"mu": float(self.estimates[i])}
            if self.group_counts is not None:
                entry["n_group"] = float(self.group_counts[i])
            per_race[label] = entry
        return {
            "schema": 1,
            "method": self.kind,
            "n": float(self.n),
            "n_y1": float(self.n_context1),
            "n_y0": float(self.n_context0),
            "per_race": per_race,
            "disparity": [[float(v) for v in row] for row in self.disparity],
        }


def build_report(
    race_set: RaceSet,
    estimates,
    kind: str,
    n: float,
    n_context1: float,
    n_context0: float,
    group_counts=None,
) -> DisparityReport:
    """Assemble a report, filling the pairwise |mu(r) - mu(r')| matrix."""
    mu = np.asarray(estimates, dtype=float)
    if mu.shape != (len(race_set),):
        raise ValueError(f"expected {len(race_set)} estimates, got shape {mu.shape}")
    disparity = np.abs(mu[:, None] - mu[None, :])
    return DisparityReport(
        race_set=race_set,
        kind=kind,
        estimates=mu,
        disparity=disparity,
        n=n,
        n_context1=n_context1,
        n_context0=n_context0,
        group_counts=None if group_counts is None else np.asarray(group_counts, float),
    )


def estimate_report(
    dataset: SupplementalDataset,
    method: str,
    proxy: ContextualProxy | None = None,
    race_set: RaceSet | None = None,
) -> DisparityReport:
    """Run one estimator over every race and package the result.

    ``method`` is one of ``true`` (needs labels), ``weighted`` (proxy
    evaluated at each record's observed context) or ``bayes``.
    """
    rs = race_set or (proxy.race_set if proxy is not None else dataset.race_set)
    if rs is None:
        raise ValueError("no race set available")
    n0, n1 = dataset.context_counts()
    n = float(dataset.effective_weights().sum())
    if method == "true":
        dataset.require_labels()
        w = dataset.effective_weights()
        counts = np.array(
            [float(w[[r == label for r in dataset.races]].sum()) for label in rs]
        )
        mu = np.array([true_positive_rate(dataset, label) for label in rs])
        return build_report(rs, mu, "true", n, n1, n0, group_counts=counts)
    if proxy is None:
        raise ValueError(f"method {method!r} needs a proxy")
    if method == "weighted":
        omega0 = proxy.evaluate(dataset, 0)
        omega1 = proxy.evaluate(dataset, 1)
        observed = np.where((dataset.contexts == 1)[:, None], omega1, omega0)
        w = dataset.effective_weights()
        outcomes = dataset.contexts.astype(float)
        mu = np.array(
            [weighted_estimate(observed[:, k], outcomes, w) for k in range(len(rs))]
        )
        return build_report(rs, mu, "weighted", n, n1, n0)
    if method == "bayes":
        mu = bayes_estimates(proxy, dataset)
        if np.any(np.isnan(mu)):
            bad = rs[int(np.flatnonzero(np.isnan(mu))[0])]
            raise ZeroDenominatorError(f"proxy assigns zero mass to race {bad!r}")
        return build_report(rs, mu, "bayes", n, n1, n0)
    raise ValueError(f"unknown estimator method {method!r}")
