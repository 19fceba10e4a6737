"""Core value types: race categories, probability vectors, records, proxies.

Everything in this module is immutable after construction and safe to share
across threads.
"""

import abc
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllZeroError,
    InvalidContextError,
    InvalidDistributionError,
    LengthMismatchError,
    UnknownRaceError,
)

# Sum tolerance for probability vectors; all arithmetic producing them is
# short-chain double precision.
DISTRIBUTION_SUM_TOL = 1e-9


@dataclass(frozen=True)
class RaceSet:
    """Ordered, immutable collection of race category labels.

    Every probability vector in a session is indexed by this order.
    """

    categories: tuple[str, ...]

    def __post_init__(self):
        cats = tuple(str(c) for c in self.categories)
        if len(cats) < 2:
            raise ValueError("a race set needs at least two categories")
        if any(not c for c in cats):
            raise ValueError("race labels must be nonempty strings")
        if len(set(cats)) != len(cats):
            raise ValueError(f"race labels must be unique, got {cats}")
        object.__setattr__(self, "categories", cats)

    def __len__(self) -> int:
        return len(self.categories)

    def __iter__(self):
        return iter(self.categories)

    def __getitem__(self, i: int) -> str:
        return self.categories[i]

    def index(self, label: str) -> int:
        try:
            return self.categories.index(label)
        except ValueError:
            raise UnknownRaceError(
                f"race label {label!r} not in {self.categories}"
            ) from None


@dataclass(frozen=True, eq=False)
class RaceDistribution:
    """Probability vector over the race categories of a session.

    Entries are nonnegative and sum to 1 within ``DISTRIBUTION_SUM_TOL``.
    """

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise InvalidDistributionError(
                f"expected a 1-d vector of length >= 2, got shape {p.shape}"
            )
        if not np.all(np.isfinite(p)):
            raise InvalidDistributionError("distribution entries must be finite")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise InvalidDistributionError(f"entries outside [0, 1]: {p}")
        if abs(float(p.sum()) - 1.0) > DISTRIBUTION_SUM_TOL:
            raise InvalidDistributionError(
                f"entries sum to {p.sum()!r}, expected 1 +/- {DISTRIBUTION_SUM_TOL}"
            )
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return self.probs.size

    def __getitem__(self, i):
        return float(self.probs[i])

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)


def normalize(weights) -> RaceDistribution:
    """Scale a vector of nonnegative weights so it sums to 1.

    Raises AllZeroError when every entry is zero, which signals an impossible
    surname/geography combination; callers fall back per their own policy.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1:
        raise ValueError(f"expected a 1-d weight vector, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    if np.any(w < 0):
        raise ValueError(f"weights must be nonnegative, got {w}")
    total = float(w.sum())
    if total == 0.0:
        raise AllZeroError("cannot normalize an all-zero weight vector")
    return RaceDistribution(w / total)


def l1_distance(a, b) -> float:
    """Total variation style L1 distance between two probability vectors."""
    pa = np.asarray(a, dtype=float)
    pb = np.asarray(b, dtype=float)
    if pa.shape != pb.shape:
        raise LengthMismatchError(
            f"length mismatch: {pa.shape} vs {pb.shape}"
        )
    return float(np.abs(pa - pb).sum())


def check_context(context) -> int:
    """Validate a binary context value and return it as an int."""
    y = int(context)
    if y not in (0, 1) or y != context:
        raise InvalidContextError(f"context must be 0 or 1, got {context!r}")
    return y


@dataclass(frozen=True)
class AttributedRecord:
    """One supplemental-data row: identity, proxy variables, context, label.

    ``surname`` may be empty, meaning "surname unavailable"; downstream
    models define the fallback.  ``race`` is None for unlabeled records.
    """

    id: str
    surname: str
    geo: str
    context: int
    covariates: tuple[float, ...] = field(default=())
    race: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "context", check_context(self.context))
        object.__setattr__(
            self, "covariates", tuple(float(v) for v in self.covariates)
        )


class ContextualProxy(abc.ABC):
    """A model mapping (record, context) to a race distribution.

    Implementations must answer queries at both contexts for every record
    (the ratio estimator evaluates every record counterfactually at both)
    and must be deterministic: the same (record, context) pair always yields
    the same distribution.  Implementations hold no mutable prediction state
    and may be called concurrently.
    """

    @property
    @abc.abstractmethod
    def race_set(self) -> RaceSet:
        """Race categories this proxy predicts over."""

    @abc.abstractmethod
    def evaluate_one(self, record: AttributedRecord, context) -> RaceDistribution:
        """Predicted race distribution for one record at the given context."""

    def evaluate(self, dataset, context) -> np.ndarray:
        """Predicted race probabilities for a whole dataset at one context.

        Returns an (n, K) array whose rows are valid distributions.
        Subclasses override this with vectorized implementations.
        """
        y = check_context(context)
        rows = [self.evaluate_one(record, y).probs for record in dataset]
        if not rows:
            return np.zeros((0, len(self.race_set)))
        return np.vstack(rows)
