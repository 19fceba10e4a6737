"""Baseline surname-geocoding proxy: Pr[race | geography, surname].

Combines the census conditionals Pr[surname | race] and Pr[race | geography]
multiplicatively and renormalizes.  Surnames missing from the census table
contribute a uniform factor, which cancels under normalization, so the
prediction falls back to the geography-only distribution.
"""

import numpy as np
from sklearn.base import BaseEstimator

from .domain import ContextualProxy, RaceDistribution, RaceSet, check_context, normalize
from .errors import AllZeroError
from .tables import GeoTable, SurnameTable, SupplementalDataset


class BisgProxy(ContextualProxy, BaseEstimator):
    """Non-contextual race proxy built from census surname and geography tables.

    The proxy ignores the context argument of the ContextualProxy interface:
    both contexts receive the same distribution.  Predictions are pure; the
    model only keeps a telemetry counter of zero-product fallbacks.
    """

    def __init__(self, surname_table: SurnameTable, geo_table: GeoTable):
        if surname_table.race_set != geo_table.race_set:
            raise ValueError("surname and geography tables disagree on race categories")
        self.surname_table = surname_table
        self.geo_table = geo_table
        self._fallback_total = 0

    @property
    def race_set(self) -> RaceSet:
        return self.geo_table.race_set

    @property
    def zero_product_fallbacks(self) -> int:
        """How many predictions fell back to geography-only on a zero product."""
        return self._fallback_total

    def _note_fallback(self, n: int = 1):
        self._fallback_total += n

    def predict_geo_only(self, geo: str) -> RaceDistribution:
        """Pr[race | geography], used directly when no surname signal exists."""
        return RaceDistribution(self.geo_table.race_given_geo(geo))

    def predict_one(self, surname: str, geo: str) -> RaceDistribution:
        """BISG prediction for one (surname, geography) query.

        Fallback hierarchy: missing or unknown surname -> geography only;
        all-zero product -> geography only (counted); unknown geography ->
        UnknownGeoError.
        """
        geo_probs = self.geo_table.race_given_geo(geo)
        surname_probs = (
            self.surname_table.prob_given_race(surname) if surname.strip() else None
        )
        if surname_probs is None:
            return RaceDistribution(geo_probs)
        try:
            return normalize(surname_probs * geo_probs)
        except AllZeroError:
            self._note_fallback()
            return RaceDistribution(geo_probs)

    def evaluate_one(self, record, context) -> RaceDistribution:
        check_context(context)
        return self.predict_one(record.surname, record.geo)

    def evaluate(self, dataset: SupplementalDataset, context) -> np.ndarray:
        check_context(context)
        geo_rows = np.vstack(
            [self.geo_table.race_given_geo(g) for g in dataset.geos]
        ) if len(dataset) else np.zeros((0, len(self.race_set)))
        out = geo_rows.copy()
        known = np.zeros(len(dataset), dtype=bool)
        surname_rows = np.ones_like(out)
        for i, s in enumerate(dataset.surnames):
            if not s:
                continue
            probs = self.surname_table.prob_given_race(s)
            if probs is not None:
                known[i] = True
                surname_rows[i] = probs
        product = geo_rows * surname_rows
        totals = product.sum(axis=1)
        ok = known & (totals > 0)
        out[ok] = product[ok] / totals[ok, None]
        n_zero = int((known & (totals == 0)).sum())
        if n_zero:
            self._note_fallback(n_zero)
        return out
