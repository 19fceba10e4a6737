"""Contextual surname geocoding via Dirichlet-multinomial posteriors.

Per (geography, context) cell, the race composition gets a Dirichlet prior
built from census counts scaled by a concentration weight eta in [0, 1] and
is updated with the labeled supplemental counts observed in that cell.  The
posterior composition is combined with the census surname conditional the
same way the baseline surname-geocoding proxy combines its two factors.
"""

import csv
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .domain import (
    ContextualProxy,
    RaceDistribution,
    RaceSet,
    check_context,
    normalize,
)
from .errors import AllZeroError, UnfittedContextError, UnknownGeoError
from .estimators import bayes_estimates_from_scores, weighted_estimate
from .tables import GeoTable, SupplementalDataset, SurnameTable

# Pseudo-count floor applied entrywise to posterior parameters; eta = 0 with
# an empty cell would otherwise yield an improper posterior.
ALPHA_FLOOR = 1e-3

DEFAULT_ETA_GRID = tuple(round(0.1 * i, 10) for i in range(11))

# Improvements below this threshold do not displace the incumbent candidate,
# so exact ties resolve toward the smaller eta.
_TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DirichletPosterior:
    """Dirichlet parameters for one (geography, context) cell."""

    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim != 1 or np.any(a <= 0) or not np.all(np.isfinite(a)):
            raise ValueError(f"alpha must be strictly positive, got {a}")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)

    def mean(self) -> np.ndarray:
        return self.alpha / self.alpha.sum()

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.dirichlet(self.alpha)


def fit_posterior(census_counts, observed_counts, eta: float, alpha_floor: float = ALPHA_FLOOR) -> DirichletPosterior:
    """Posterior parameters eta * census + observed, floored entrywise."""
    c = np.asarray(census_counts, dtype=float)
    n = np.asarray(observed_counts, dtype=float)
    if c.shape != n.shape:
        raise ValueError(f"count shape mismatch: {c.shape} vs {n.shape}")
    if not 0 <= eta <= 1:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    if np.any(c < 0) or np.any(n < 0):
        raise ValueError("counts must be nonnegative")
    return DirichletPosterior(np.maximum(eta * c + n, alpha_floor))


def posterior_point_estimate(
    params: DirichletPosterior,
    mode: str = "mean",
    rng: np.random.Generator | None = None,
) -> RaceDistribution:
    """Point composition from a posterior: analytic mean, or one seeded draw."""
    if mode == "mean":
        return RaceDistribution(params.mean())
    if mode == "sample":
        if rng is None:
            raise ValueError("sampling mode needs a random generator")
        return RaceDistribution(params.sample(rng))
    raise ValueError(f"unknown mode {mode!r}")


def _cell_counts(train: SupplementalDataset, geo_ids, k: int) -> dict:
    """Labeled per-race counts for every (geography, context) cell at once."""
    counts = {(g, y): np.zeros(k) for g in geo_ids for y in (0, 1)}
    if len(train) == 0:
        return counts
    idx = train.race_indices()
    w = train.effective_weights()
    for i in range(len(train)):
        key = (train.geos[i], int(train.contexts[i]))
        if key not in counts:
            raise UnknownGeoError(
                f"training record {train.ids[i]!r} lives in geo "
                f"{train.geos[i]!r}, which is absent from the geography table"
            )
        counts[key][idx[i]] += w[i]
    return counts


class CbisgProxy(ContextualProxy, BaseEstimator):
    """Contextual proxy with an eta-weighted census prior per geography.

    ``eta`` is either a float in [0, 1] applied to every geography or the
    string ``"tune"``, which grid-searches a per-geography value that
    minimizes the gap between estimated and empirical disparity on the
    training records of that geography.
    """

    def __init__(
        self,
        surname_table: SurnameTable,
        geo_table: GeoTable,
        eta=0.0,
        eta_grid=DEFAULT_ETA_GRID,
        tune_estimator: str = "bayes",
        default_eta: float = 0.0,
        alpha_floor: float = ALPHA_FLOOR,
        predict_mode: str = "mean",
        random_state: int | None = None,
    ):
        if surname_table.race_set != geo_table.race_set:
            raise ValueError("surname and geography tables disagree on race categories")
        self.surname_table = surname_table
        self.geo_table = geo_table
        self.eta = eta
        self.eta_grid = eta_grid
        self.tune_estimator = tune_estimator
        self.default_eta = default_eta
        self.alpha_floor = alpha_floor
        self.predict_mode = predict_mode
        self.random_state = random_state

    @property
    def race_set(self) -> RaceSet:
        return self.geo_table.race_set

    # -- fitting ------------------------------------------------------------

    def fit(self, train: SupplementalDataset) -> "CbisgProxy":
        """Fit one posterior per (geography, context) cell of the geo table."""
        train.require_labels()
        k = len(self.race_set)
        geo_ids = self.geo_table.geo_ids
        cell_counts = _cell_counts(train, geo_ids, k)
        if self.eta == "tune":
            eta_by_geo = {
                g: tune_eta(
                    g,
                    self.eta_grid,
                    train,
                    self.surname_table,
                    self.geo_table,
                    estimator=self.tune_estimator,
                    default_eta=self.default_eta,
                    alpha_floor=self.alpha_floor,
                )
                for g in geo_ids
            }
        else:
            eta = float(self.eta)
            if not 0 <= eta <= 1:
                raise ValueError(f"eta must be in [0, 1], got {eta}")
            eta_by_geo = {g: eta for g in geo_ids}
        posteriors = {}
        for g in geo_ids:
            census = self.geo_table.counts(g)
            for y in (0, 1):
                posteriors[(g, y)] = fit_posterior(
                    census, cell_counts[(g, y)], eta_by_geo[g], self.alpha_floor
                )
        rng = np.random.default_rng(self.random_state)
        cell_probs = {}
        for key, post in posteriors.items():
            cell_probs[key] = posterior_point_estimate(
                post, mode=self.predict_mode, rng=rng
            ).probs
        self.posteriors_ = posteriors
        self.eta_ = eta_by_geo
        self.cell_probs_ = cell_probs
        return self

    def _check_fitted(self):
        if not hasattr(self, "cell_probs_"):
            raise NotFittedError("CbisgProxy must be fitted before predicting")

    # -- prediction -----------------------------------------------------------

    def context_composition(self, geo: str, context) -> RaceDistribution:
        """Posterior point estimate of Pr[race | geography, context]."""
        self._check_fitted()
        y = check_context(context)
        if geo not in self.geo_table:
            raise UnknownGeoError(f"unknown geo id {geo!r}")
        try:
            return RaceDistribution(self.cell_probs_[(str(geo), y)])
        except KeyError:
            raise UnfittedContextError(f"no posterior for cell ({geo!r}, {y})") from None

    def predict_one(self, surname: str, geo: str, context) -> RaceDistribution:
        """Contextual prediction for one (surname, geography, context) query."""
        composition = self.context_composition(geo, context).probs
        surname_probs = (
            self.surname_table.prob_given_race(surname) if surname.strip() else None
        )
        if surname_probs is None:
            return RaceDistribution(composition)
        try:
            return normalize(composition * surname_probs)
        except AllZeroError:
            return RaceDistribution(composition)

    def evaluate_one(self, record, context) -> RaceDistribution:
        return self.predict_one(record.surname, record.geo, context)

    def evaluate(self, dataset: SupplementalDataset, context) -> np.ndarray:
        self._check_fitted()
        y = check_context(context)
        k = len(self.race_set)
        if len(dataset) == 0:
            return np.zeros((0, k))
        comp = np.vstack([self.cell_probs_[(g, y)] for g in dataset.geos])
        surname_rows = np.ones_like(comp)
        known = np.zeros(len(dataset), dtype=bool)
        for i, s in enumerate(dataset.surnames):
            if not s:
                continue
            probs = self.surname_table.prob_given_race(s)
            if probs is not None:
                known[i] = True
                surname_rows[i] = probs
        product = comp * surname_rows
        totals = product.sum(axis=1)
        ok = totals > 0
        out = comp.copy()
        out[ok] = product[ok] / totals[ok, None]
        return out

    # -- serialization ---------------------------------------------------------

    def save_csv(self, path):
        """Write fitted posteriors as rows ``geo,y,<alpha_1>,...,<alpha_K>,eta``."""
        self._check_fitted()
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["geo", "y", *[f"alpha_{c}" for c in self.race_set], "eta"]
            )
            for g in self.geo_table.geo_ids:
                for y in (0, 1):
                    alpha = self.posteriors_[(g, y)].alpha
                    writer.writerow(
                        [g, y, *(f"{a:.17g}" for a in alpha), f"{self.eta_[g]:.17g}"]
                    )

    @classmethod
    def load_csv(
        cls,
        path,
        surname_table: SurnameTable,
        geo_table: GeoTable,
        predict_mode: str = "mean",
        random_state: int | None = None,
    ) -> "CbisgProxy":
        """Rebuild a fitted proxy from its posterior CSV plus census tables."""
        proxy = cls(
            surname_table,
            geo_table,
            predict_mode=predict_mode,
            random_state=random_state,
        )
        posteriors = {}
        eta_by_geo = {}
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            k = len(header) - 3
            if k != len(geo_table.race_set):
                raise ValueError(
                    f"model file has {k} race columns, tables have "
                    f"{len(geo_table.race_set)}"
                )
            for row in reader:
                if not row:
                    continue
                g, y = row[0], int(row[1])
                alpha = np.array([float(v) for v in row[2 : 2 + k]])
                posteriors[(g, y)] = DirichletPosterior(alpha)
                eta_by_geo[g] = float(row[2 + k])
        rng = np.random.default_rng(random_state)
        proxy.posteriors_ = posteriors
        proxy.eta_ = eta_by_geo
        proxy.cell_probs_ = {
            key: posterior_point_estimate(post, mode=predict_mode, rng=rng).probs
            for key, post in posteriors.items()
        }
        return proxy


# ---------------------------------------------------------------------------
# eta tuning
# ---------------------------------------------------------------------------


def _disparity_error(estimated: np.ndarray, empirical: np.ndarray, valid: np.ndarray) -> float | None:
    """Mean gap between estimated and empirical pairwise disparities.

    With two race categories this is exactly |estimated disparity -
    empirical disparity|; with more it averages over valid pairs.
    """
    pairs = []
    k = len(estimated)
    for a in range(k):
        for b in range(a + 1, k):
            if valid[a] and valid[b]:
                est = abs(estimated[a] - estimated[b])
                emp = abs(empirical[a] - empirical[b])
                pairs.append(abs(est - emp))
    if not pairs:
        return None
    return float(np.mean(pairs))


def tune_eta(
    geo: str,
    candidate_etas,
    train: SupplementalDataset,
    surname_table: SurnameTable,
    geo_table: GeoTable,
    estimator: str = "bayes",
    default_eta: float = 0.0,
    alpha_floor: float = ALPHA_FLOOR,
) -> float:
    """Pick the eta minimizing disparity-estimation error within one geography.

    Evaluates every candidate on the labeled training records located in
    ``geo`` and returns the minimizer; exact ties break toward the smaller
    eta.  Geographies with no usable training data return ``default_eta``.
    """
    candidates = sorted(float(e) for e in candidate_etas)
    if not candidates:
        raise ValueError("candidate eta list is empty")
    train.require_labels()
    mask = np.array([g == str(geo) for g in train.geos])
    if not np.any(mask):
        return default_eta
    sub = train.subset(mask)
    rs = geo_table.race_set
    k = len(rs)
    census = geo_table.counts(geo)
    counts = {y: np.zeros(k) for y in (0, 1)}
    idx = sub.race_indices(rs)
    w = sub.effective_weights()
    for i in range(len(sub)):
        counts[int(sub.contexts[i])][idx[i]] += w[i]
    group_totals = counts[0] + counts[1]
    valid = group_totals > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        empirical = np.where(valid, counts[1] / np.where(valid, group_totals, 1.0), np.nan)
    if valid.sum() < 2:
        return default_eta

    surname_rows = np.ones((len(sub), k))
    for i, s in enumerate(sub.surnames):
        probs = surname_table.prob_given_race(s) if s else None
        if probs is not None:
            surname_rows[i] = probs
    n0, n1 = sub.context_counts()
    outcomes = sub.contexts.astype(float)

    best_eta, best_err = default_eta, None
    for eta in candidates:
        cell_probs = {
            y: fit_posterior(census, counts[y], eta, alpha_floor).mean() for y in (0, 1)
        }
        omega = {}
        for y in (0, 1):
            product = cell_probs[y][None, :] * surname_rows
            totals = product.sum(axis=1)
            rows = np.tile(cell_probs[y], (len(sub), 1))
            ok = totals > 0
            rows[ok] = product[ok] / totals[ok, None]
            omega[y] = rows
        if estimator == "bayes":
            estimated = bayes_estimates_from_scores(omega[0], omega[1], n0, n1, w)
        elif estimator == "weighted":
            observed = np.where((sub.contexts == 1)[:, None], omega[1], omega[0])
            estimated = np.full(k, np.nan)
            for r in range(k):
                mass = float((w * observed[:, r]).sum())
                if mass > 0:
                    estimated[r] = weighted_estimate(observed[:, r], outcomes, w)
        else:
            raise ValueError(f"unknown tuning estimator {estimator!r}")
        ok_races = valid & ~np.isnan(estimated)
        err = _disparity_error(estimated, empirical, ok_races)
        if err is None:
            continue
        if best_err is None or err < best_err - _TIE_TOL:
            best_eta, best_err = eta, err
    return best_eta
