"""Census-style count tables and supplemental attributed datasets.

Canonical file format is UTF-8 CSV with one header row.  Surname and
geography files carry nonnegative counts per race category; supplemental
files carry one attributed record per row with optional trailing covariate
columns.  Loaded tables are immutable and shareable.
"""

import csv
import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

from .domain import AttributedRecord, RaceSet, check_context
from .errors import (
    DuplicateGeoError,
    DuplicateSurnameError,
    InconsistentCovariateArityError,
    InvalidContextError,
    MalformedRowError,
    UnknownGeoError,
    UnknownRaceError,
    UnlabeledDatasetError,
    ZeroGeoRowError,
    ZeroVarianceWarning,
)

_VARIANCE_FLOOR = 1e-12


def _normalize_surname(surname: str) -> str:
    return surname.strip().upper()


class SurnameTable:
    """Counts of surname by race, with the derived conditional Pr[surname | race].

    ``race_totals`` defaults to the per-race column sums; it can be supplied
    explicitly (e.g. a full population count) in which case the per-race
    conditional masses sum to less than one, mirroring census files that omit
    rare names.
    """

    def __init__(self, rows: dict, race_set: RaceSet, race_totals=None):
        self.race_set = race_set
        k = len(race_set)
        counts = {}
        for surname, vec in rows.items():
            v = np.asarray(vec, dtype=float)
            if v.shape != (k,):
                raise MalformedRowError(
                    f"surname {surname!r}: expected {k} counts, got shape {v.shape}"
                )
            if np.any(v < 0) or not np.all(np.isfinite(v)):
                raise MalformedRowError(f"surname {surname!r}: invalid counts {v}")
            key = _normalize_surname(surname)
            if key in counts:
                raise DuplicateSurnameError(f"duplicate surname {key!r}")
            counts[key] = v
        column_sums = (
            np.sum(list(counts.values()), axis=0) if counts else np.zeros(k)
        )
        if race_totals is None:
            totals = column_sums.astype(float)
        else:
            totals = np.asarray(race_totals, dtype=float)
            if totals.shape != (k,):
                raise MalformedRowError(
                    f"race_totals must have length {k}, got shape {totals.shape}"
                )
            if np.any(totals + 1e-9 < column_sums):
                raise MalformedRowError(
                    "race_totals must be at least the per-race column sums"
                )
        if counts and np.any(totals <= 0):
            raise MalformedRowError("race totals must be positive")
        self._counts = counts
        self.race_totals = totals
        # index for vectorized lookups
        self._surnames = list(counts)
        self._index = {s: i for i, s in enumerate(self._surnames)}
        if counts:
            self._prob_matrix = np.vstack([counts[s] for s in self._surnames])
            self._prob_matrix = self._prob_matrix / totals[None, :]
        else:
            self._prob_matrix = np.zeros((0, k))

    def __len__(self) -> int:
        return len(self._counts)

    def __contains__(self, surname: str) -> bool:
        return _normalize_surname(surname) in self._index

    @property
    def surnames(self) -> list:
        return list(self._surnames)

    def counts(self, surname: str) -> np.ndarray:
        return self._counts[_normalize_surname(surname)]

    def prob_given_race(self, surname: str):
        """Pr[surname | race] per race, or None when the surname is unknown."""
        i = self._index.get(_normalize_surname(surname))
        if i is None:
            return None
        return self._prob_matrix[i]

    def prob_matrix(self) -> np.ndarray:
        """(num_surnames, K) matrix of Pr[surname | race], row order = surnames."""
        return self._prob_matrix.copy()


class GeoTable:
    """Counts of race by geography, with the derived Pr[race | geography]."""

    def __init__(self, rows: dict, race_set: RaceSet):
        self.race_set = race_set
        k = len(race_set)
        counts = {}
        for geo, vec in rows.items():
            v = np.asarray(vec, dtype=float)
            if v.shape != (k,):
                raise MalformedRowError(
                    f"geo {geo!r}: expected {k} counts, got shape {v.shape}"
                )
            if np.any(v < 0) or not np.all(np.isfinite(v)):
                raise MalformedRowError(f"geo {geo!r}: invalid counts {v}")
            if v.sum() <= 0:
                raise ZeroGeoRowError(f"geo {geo!r} has no positive count")
            key = str(geo)
            if key in counts:
                raise DuplicateGeoError(f"duplicate geo id {key!r}")
            counts[key] = v
        self._counts = counts
        self._geo_ids = list(counts)
        self._index = {g: i for i, g in enumerate(self._geo_ids)}
        if counts:
            mat = np.vstack([counts[g] for g in self._geo_ids])
            self._prob_matrix = mat / mat.sum(axis=1, keepdims=True)
        else:
            self._prob_matrix = np.zeros((0, k))

    def __len__(self) -> int:
        return len(self._counts)

    def __contains__(self, geo: str) -> bool:
        return str(geo) in self._index

    @property
    def geo_ids(self) -> list:
        return list(self._geo_ids)

    def counts(self, geo: str) -> np.ndarray:
        try:
            return self._counts[str(geo)]
        except KeyError:
            raise UnknownGeoError(f"unknown geo id {geo!r}") from None

    def race_given_geo(self, geo: str) -> np.ndarray:
        """Pr[race | geography] for one geography."""
        i = self._index.get(str(geo))
        if i is None:
            raise UnknownGeoError(f"unknown geo id {geo!r}")
        return self._prob_matrix[i]

    def geo_index(self, geo: str) -> int:
        i = self._index.get(str(geo))
        if i is None:
            raise UnknownGeoError(f"unknown geo id {geo!r}")
        return i

    def prob_matrix(self) -> np.ndarray:
        return self._prob_matrix.copy()


class SupplementalDataset:
    """Columnar store of attributed records.

    Holds ids, surnames, geographies, binary contexts, covariates and
    (optionally) race labels as aligned arrays.  ``weights`` is an optional
    per-row mass used to evaluate estimators exactly on enumerated
    populations; sampled datasets leave it None (uniform).
    Instances are immutable; subsetting returns new datasets.
    """

    def __init__(
        self,
        ids,
        surnames,
        geos,
        contexts,
        covariates=None,
        races=None,
        race_set: RaceSet | None = None,
        weights=None,
    ):
        self.ids = [str(i) for i in ids]
        n = len(self.ids)
        self.surnames = [_normalize_surname(s) for s in surnames]
        self.geos = [str(g) for g in geos]
        y = np.asarray(contexts, dtype=int)
        if y.shape != (n,) or len(self.surnames) != n or len(self.geos) != n:
            raise ValueError("all columns must have the same length")
        if n and not np.all((y == 0) | (y == 1)):
            bad = y[(y != 0) & (y != 1)][0]
            raise InvalidContextError(f"context must be 0 or 1, got {bad}")
        self.contexts = y
        if covariates is None:
            covariates = np.zeros((n, 0))
        cov = np.asarray(covariates, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != n:
            raise InconsistentCovariateArityError(
                f"covariates must be (n, p), got shape {cov.shape}"
            )
        self.covariates = cov
        if races is None:
            self.races = [None] * n
        else:
            self.races = [r if r else None for r in races]
            if len(self.races) != n:
                raise ValueError("races column length mismatch")
        self.race_set = race_set
        if race_set is not None:
            for r in self.races:
                if r is not None and r not in race_set.categories:
                    raise UnknownRaceError(
                        f"race label {r!r} not in {race_set.categories}"
                    )
        if weights is None:
            self.weights = None
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be nonnegative floats, one per row")
            self.weights = w

    # -- construction -----------------------------------------------------

    @classmethod
    def from_records(cls, records, race_set: RaceSet | None = None, weights=None):
        records = list(records)
        arity = {len(r.covariates) for r in records}
        if len(arity) > 1:
            raise InconsistentCovariateArityError(
                f"records carry differing covariate counts: {sorted(arity)}"
            )
        p = arity.pop() if arity else 0
        cov = np.array([r.covariates for r in records], dtype=float).reshape(
            len(records), p
        )
        return cls(
            ids=[r.id for r in records],
            surnames=[r.surname for r in records],
            geos=[r.geo for r in records],
            contexts=[r.context for r in records],
            covariates=cov,
            races=[r.race for r in records],
            race_set=race_set,
            weights=weights,
        )

    # -- basic protocol ----------------------------------------------------

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        for i in range(len(self.ids)):
            yield self.record(i)

    def record(self, i: int) -> AttributedRecord:
        return AttributedRecord(
            id=self.ids[i],
            surname=self.surnames[i],
            geo=self.geos[i],
            context=int(self.contexts[i]),
            covariates=tuple(self.covariates[i]),
            race=self.races[i],
        )

    @property
    def records(self) -> list:
        """Materialized record view; the columns remain the primary storage."""
        return [self.record(i) for i in range(len(self.ids))]

    @property
    def covariate_dim(self) -> int:
        return self.covariates.shape[1]

    @property
    def race_labels_present(self) -> bool:
        return len(self) > 0 and all(r is not None for r in self.races)

    def require_labels(self):
        if not self.race_labels_present:
            raise UnlabeledDatasetError(
                "this operation needs ground-truth race labels on every record"
            )

    def race_indices(self, race_set: RaceSet | None = None) -> np.ndarray:
        """Integer race labels aligned with a race set's category order."""
        self.require_labels()
        rs = race_set or self.race_set
        if rs is None:
            raise ValueError("no race set attached to this dataset")
        lookup = {label: i for i, label in enumerate(rs.categories)}
        try:
            return np.array([lookup[r] for r in self.races], dtype=int)
        except KeyError as exc:
            raise UnknownRaceError(f"race label {exc.args[0]!r} not in {rs.categories}")

    def effective_weights(self) -> np.ndarray:
        if self.weights is not None:
            return self.weights
        return np.ones(len(self))

    def subset(self, mask) -> "SupplementalDataset":
        idx = np.flatnonzero(np.asarray(mask)) if np.asarray(mask).dtype == bool else np.asarray(mask)
        return SupplementalDataset(
            ids=[self.ids[i] for i in idx],
            surnames=[self.surnames[i] for i in idx],
            geos=[self.geos[i] for i in idx],
            contexts=self.contexts[idx],
            covariates=self.covariates[idx],
            races=[self.races[i] for i in idx],
            race_set=self.race_set,
            weights=None if self.weights is None else self.weights[idx],
        )

    def with_covariates(self, covariates) -> "SupplementalDataset":
        return SupplementalDataset(
            ids=self.ids,
            surnames=self.surnames,
            geos=self.geos,
            contexts=self.contexts,
            covariates=covariates,
            races=self.races,
            race_set=self.race_set,
            weights=self.weights,
        )

    def context_counts(self) -> tuple[float, float]:
        """Total weight of context-0 and context-1 rows."""
        w = self.effective_weights()
        n1 = float(w[self.contexts == 1].sum())
        n0 = float(w[self.contexts == 0].sum())
        return n0, n1


def group_counts(dataset: SupplementalDataset, geo: str, context) -> np.ndarray:
    """Per-race record counts within one (geography, context) cell."""
    dataset.require_labels()
    y = check_context(context)
    rs = dataset.race_set
    if rs is None:
        raise ValueError("dataset has no race set attached")
    counts = np.zeros(len(rs))
    geo = str(geo)
    idx = dataset.race_indices()
    w = dataset.effective_weights()
    for i in range(len(dataset)):
        if dataset.geos[i] == geo and dataset.contexts[i] == y:
            counts[idx[i]] += w[i]
    return counts


# ---------------------------------------------------------------------------
# CSV loading
# ---------------------------------------------------------------------------


def _read_rows(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise MalformedRowError(f"{path}: empty file, expected a header row")
    return rows[0], rows[1:]


def _parse_counts(tokens, where):
    try:
        values = [float(t) for t in tokens]
    except ValueError:
        raise MalformedRowError(f"{where}: non-numeric count in {tokens}") from None
    if any(v < 0 for v in values):
        raise MalformedRowError(f"{where}: negative count in {tokens}")
    return values


def _check_header(header, expected, path):
    if [h.strip() for h in header] != expected:
        raise MalformedRowError(
            f"{path}: header {header} does not match expected {expected}"
        )


def load_surname_table(path, race_set: RaceSet, race_totals=None) -> SurnameTable:
    """Load ``surname,<race_1>,...,<race_K>`` counts from a CSV file."""
    header, body = _read_rows(path)
    _check_header(header, ["surname", *race_set.categories], path)
    k = len(race_set)
    rows = {}
    for lineno, row in enumerate(body, start=2):
        if len(row) != k + 1:
            raise MalformedRowError(
                f"{path}:{lineno}: expected {k + 1} columns, got {len(row)}"
            )
        surname = _normalize_surname(row[0])
        if surname in rows:
            raise DuplicateSurnameError(f"{path}:{lineno}: duplicate surname {surname!r}")
        rows[surname] = _parse_counts(row[1:], f"{path}:{lineno}")
    return SurnameTable(rows, race_set, race_totals=race_totals)


def load_geo_table(path, race_set: RaceSet) -> GeoTable:
    """Load ``geo_id,<race_1>,...,<race_K>`` counts from a CSV file."""
    header, body = _read_rows(path)
    _check_header(header, ["geo_id", *race_set.categories], path)
    k = len(race_set)
    rows = {}
    for lineno, row in enumerate(body, start=2):
        if len(row) != k + 1:
            raise MalformedRowError(
                f"{path}:{lineno}: expected {k + 1} columns, got {len(row)}"
            )
        geo = row[0].strip()
        if geo in rows:
            raise DuplicateGeoError(f"{path}:{lineno}: duplicate geo id {geo!r}")
        counts = _parse_counts(row[1:], f"{path}:{lineno}")
        if sum(counts) <= 0:
            raise ZeroGeoRowError(f"{path}:{lineno}: geo {geo!r} has all-zero counts")
        rows[geo] = counts
    return GeoTable(rows, race_set)


def load_supplemental(path, race_set: RaceSet) -> SupplementalDataset:
    """Load ``id,surname,geo,y,race[,cov_1,...,cov_p]`` records from CSV.

    An empty race field marks an unlabeled record.
    """
    header, body = _read_rows(path)
    fixed = ["id", "surname", "geo", "y", "race"]
    if [h.strip() for h in header[:5]] != fixed:
        raise MalformedRowError(
            f"{path}: header must start with {fixed}, got {header[:5]}"
        )
    p = len(header) - 5
    ids, surnames, geos, contexts, races = [], [], [], [], []
    cov_rows = []
    for lineno, row in enumerate(body, start=2):
        if len(row) != 5 + p:
            raise InconsistentCovariateArityError(
                f"{path}:{lineno}: expected {5 + p} columns, got {len(row)}"
            )
        ids.append(row[0].strip())
        surnames.append(row[1])
        geos.append(row[2])
        try:
            y = int(row[3])
        except ValueError:
            raise InvalidContextError(f"{path}:{lineno}: bad context {row[3]!r}") from None
        if y not in (0, 1):
            raise InvalidContextError(f"{path}:{lineno}: context must be 0 or 1, got {y}")
        contexts.append(y)
        race = row[4].strip()
        if race and race not in race_set.categories:
            raise UnknownRaceError(f"{path}:{lineno}: unknown race {race!r}")
        races.append(race or None)
        try:
            cov_rows.append([float(v) for v in row[5:]])
        except ValueError:
            raise MalformedRowError(f"{path}:{lineno}: non-numeric covariate") from None
    cov = np.array(cov_rows, dtype=float).reshape(len(ids), p)
    return SupplementalDataset(
        ids, surnames, geos, contexts, covariates=cov, races=races, race_set=race_set
    )


# ---------------------------------------------------------------------------
# covariate standardization
# ---------------------------------------------------------------------------


def standardize_covariates(dataset: SupplementalDataset):
    """Center and scale covariate columns to mean 0, variance 1.

    Returns (standardized dataset, means, stds).  Constant columns are only
    mean-centered: their std is recorded as 1 and a ZeroVarianceWarning is
    emitted.  The returned (means, stds) reproduce the transform on new data.
    """
    if len(dataset) == 0:
        raise ValueError("cannot standardize an empty dataset")
    cov = dataset.covariates
    means = cov.mean(axis=0) if cov.size else np.zeros(cov.shape[1])
    stds = cov.std(axis=0) if cov.size else np.ones(cov.shape[1])
    constant = stds < _VARIANCE_FLOOR
    if np.any(constant):
        warnings.warn(
            f"{int(constant.sum())} covariate column(s) have zero variance; "
            "passing them through mean-centered only",
            ZeroVarianceWarning,
            stacklevel=2,
        )
    stds = np.where(constant, 1.0, stds)
    return apply_standardization(dataset, means, stds), means, stds


def apply_standardization(dataset: SupplementalDataset, means, stds) -> SupplementalDataset:
    """Apply a previously fitted covariate transform to a dataset."""
    means = np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    if dataset.covariate_dim != means.size or dataset.covariate_dim != stds.size:
        raise InconsistentCovariateArityError(
            f"transform of width {means.size} applied to covariates of width "
            f"{dataset.covariate_dim}"
        )
    if dataset.covariate_dim == 0:
        return dataset
    return dataset.with_covariates((dataset.covariates - means) / stds)


# ---------------------------------------------------------------------------
# serialization, splitting
# ---------------------------------------------------------------------------


def _format_count(value: float) -> str:
    if value == int(value):
        return str(int(value))
    return repr(float(value))


def write_surname_table(table: SurnameTable, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["surname", *table.race_set.categories])
        for surname in table.surnames:
            writer.writerow([surname, *map(_format_count, table.counts(surname))])


def write_geo_table(table: GeoTable, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["geo_id", *table.race_set.categories])
        for geo in table.geo_ids:
            writer.writerow([geo, *map(_format_count, table.counts(geo))])


def write_supplemental(dataset: SupplementalDataset, path):
    p = dataset.covariate_dim
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["id", "surname", "geo", "y", "race", *[f"cov_{j + 1}" for j in range(p)]]
        )
        for i in range(len(dataset)):
            writer.writerow(
                [
                    dataset.ids[i],
                    dataset.surnames[i],
                    dataset.geos[i],
                    int(dataset.contexts[i]),
                    dataset.races[i] or "",
                    *(repr(float(v)) for v in dataset.covariates[i]),
                ]
            )


def export_derived_surname_probs(table: SurnameTable, path):
    """Write the derived Pr[surname | race] table with 12 significant digits."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["surname", *table.race_set.categories])
        for surname in table.surnames:
            probs = table.prob_given_race(surname)
            writer.writerow([surname, *(f"{v:.12g}" for v in probs)])


def export_derived_geo_probs(table: GeoTable, path):
    """Write the derived Pr[race | geography] table with 12 significant digits."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["geo_id", *table.race_set.categories])
        for geo in table.geo_ids:
            probs = table.race_given_geo(geo)
            writer.writerow([geo, *(f"{v:.12g}" for v in probs)])


def _id_bucket(record_id: str, seed: int) -> float:
    digest = hashlib.sha256(f"{seed}:{record_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def split_dataset(dataset: SupplementalDataset, test_fraction: float, seed: int):
    """Deterministic train/test split keyed on hashed record ids.

    The split is stable under row reordering because membership depends only
    on (seed, record id).
    """
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    buckets = np.array([_id_bucket(i, seed) for i in dataset.ids])
    test_mask = buckets < test_fraction
    return dataset.subset(~test_mask), dataset.subset(test_mask)
