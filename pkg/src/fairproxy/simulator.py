"""Synthetic populations over (race, geography, surname, outcome).

Populations are small-support so the full joint probability table is exactly
enumerable; every conditional, positive rate, and bias expression used in
tests comes from summing that table, with no sampling error.  The outcome is
specified distributionally as Pr[outcome = 1 | race, geography], so the
"decision" is realized through the joint law rather than a deterministic
feature map.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .domain import ContextualProxy, RaceDistribution, RaceSet, check_context
from .errors import InvalidConfigError, ZeroMassEventError
from .tables import GeoTable, SupplementalDataset, SurnameTable

_MASS_TOL = 1e-12


def _check_rows_stochastic(matrix, name):
    m = np.asarray(matrix, dtype=float)
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise InvalidConfigError(f"{name} must be nonnegative and finite")
    sums = m.sum(axis=-1)
    if not np.allclose(sums, 1.0, atol=1e-9):
        raise InvalidConfigError(f"rows of {name} must sum to 1, got sums {sums}")
    return m


@dataclass(frozen=True, eq=False)
class DgpConfig:
    """Generating process for a synthetic population.

    ``assumption1_violation`` mixes the race-only surname table with a
    per-(race, geography) surname table, so surname and geography become
    dependent given race as the weight grows.
    """

    race_set: RaceSet
    geo_ids: tuple
    surnames: tuple
    theta: np.ndarray
    geo_given_race: np.ndarray
    surname_given_race: np.ndarray
    outcome_rates: np.ndarray
    assumption1_violation: float = 0.0
    surname_given_race_geo: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        k, g, s = len(self.race_set), len(self.geo_ids), len(self.surnames)
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (k,) or np.any(theta <= 0):
            raise InvalidConfigError(f"theta must be {k} positive entries")
        if abs(theta.sum() - 1.0) > 1e-9:
            raise InvalidConfigError("theta must sum to 1")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(
            self,
            "geo_given_race",
            _check_rows_stochastic(self.geo_given_race, "geo_given_race").reshape(k, g),
        )
        object.__setattr__(
            self,
            "surname_given_race",
            _check_rows_stochastic(
                self.surname_given_race, "surname_given_race"
            ).reshape(k, s),
        )
        rates = np.asarray(self.outcome_rates, dtype=float)
        if rates.shape != (k, g) or np.any(rates < 0) or np.any(rates > 1):
            raise InvalidConfigError(f"outcome_rates must be a ({k}, {g}) matrix in [0, 1]")
        object.__setattr__(self, "outcome_rates", rates)
        v = float(self.assumption1_violation)
        if not 0 <= v <= 1:
            raise InvalidConfigError("assumption1_violation must be in [0, 1]")
        object.__setattr__(self, "assumption1_violation", v)
        if v > 0:
            if self.surname_given_race_geo is None:
                raise InvalidConfigError(
                    "assumption1_violation > 0 needs surname_given_race_geo"
                )
            mixed = _check_rows_stochastic(
                self.surname_given_race_geo, "surname_given_race_geo"
            ).reshape(k, g, s)
            object.__setattr__(self, "surname_given_race_geo", mixed)


class JointTable:
    """Exact probability mass over (race, geography, surname, outcome) cells."""

    def __init__(self, race_set: RaceSet, geo_ids, surnames, mass):
        self.race_set = race_set
        self.geo_ids = tuple(str(g) for g in geo_ids)
        self.surnames = tuple(str(s) for s in surnames)
        m = np.asarray(mass, dtype=float)
        expected = (len(race_set), len(self.geo_ids), len(self.surnames), 2)
        if m.shape != expected:
            raise InvalidConfigError(f"mass must have shape {expected}, got {m.shape}")
        if np.any(m < 0):
            raise InvalidConfigError("cell masses must be nonnegative")
        if abs(m.sum() - 1.0) > _MASS_TOL:
            raise InvalidConfigError(f"cell masses sum to {m.sum()!r}, expected 1")
        m = m.copy()
        m.setflags(write=False)
        self.mass = m
        self._geo_index = {g: i for i, g in enumerate(self.geo_ids)}
        self._surname_index = {s: i for i, s in enumerate(self.surnames)}

    # -- marginals and conditionals ---------------------------------------

    def theta(self) -> np.ndarray:
        """Marginal race proportions."""
        return self.mass.sum(axis=(1, 2, 3))

    def nu(self) -> float:
        """Marginal rate of outcome 1."""
        return float(self.mass[..., 1].sum())

    def context_rate(self, context) -> float:
        y = check_context(context)
        return float(self.mass[..., y].sum())

    def positive_rate(self, race: str) -> float:
        """Pr[outcome = 1 | race]."""
        r = self.race_set.index(race)
        total = self.mass[r].sum()
        if total <= 0:
            raise ZeroMassEventError(f"race {race!r} has zero mass")
        return float(self.mass[r, :, :, 1].sum() / total)

    def positive_rates(self) -> np.ndarray:
        return np.array([self.positive_rate(r) for r in self.race_set])

    def phi(self, race: str, context) -> float:
        """Pr[race | outcome = context]."""
        r = self.race_set.index(race)
        y = check_context(context)
        total = self.mass[..., y].sum()
        if total <= 0:
            raise ZeroMassEventError(f"context {y} has zero mass")
        return float(self.mass[r, :, :, y].sum() / total)

    def race_given(self, geo=None, surname=None, context=None) -> RaceDistribution:
        """Exact conditional race distribution given any subset of evidence."""
        m = self.mass
        if geo is not None:
            g = self._geo_index.get(str(geo))
            if g is None:
                raise ZeroMassEventError(f"unknown geo {geo!r}")
            m = m[:, g : g + 1]
        if surname is not None:
            s = self._surname_index.get(str(surname))
            if s is None:
                raise ZeroMassEventError(f"unknown surname {surname!r}")
            m = m[:, :, s : s + 1]
        if context is not None:
            y = check_context(context)
            m = m[..., y : y + 1]
        weights = m.reshape(len(self.race_set), -1).sum(axis=1)
        total = weights.sum()
        if total <= 0:
            raise ZeroMassEventError("conditioning event has zero mass")
        return RaceDistribution(weights / total)

    # -- dataset views -----------------------------------------------------

    def to_weighted_dataset(self) -> SupplementalDataset:
        """All positive-mass cells as weighted labeled records.

        Estimators and diagnostics run on this dataset compute exact
        population quantities: every (race, geo, surname, outcome) cell
        becomes one record whose weight is the cell mass.
        """
        k, g, s, _ = self.mass.shape
        r_idx, g_idx, s_idx, y_idx = np.nonzero(self.mass > 0)
        return SupplementalDataset(
            ids=[str(i) for i in range(len(r_idx))],
            surnames=[self.surnames[i] for i in s_idx],
            geos=[self.geo_ids[i] for i in g_idx],
            contexts=y_idx,
            races=[self.race_set[i] for i in r_idx],
            race_set=self.race_set,
            weights=self.mass[r_idx, g_idx, s_idx, y_idx],
        )

    def census_surname_table(self, scale: float = 1.0) -> SurnameTable:
        """Exact census-style surname counts: count(s, r) = scale * Pr[s, r]."""
        joint_sr = self.mass.sum(axis=(1, 3)).T * scale
        rows = {s: joint_sr[i] for i, s in enumerate(self.surnames)}
        return SurnameTable(rows, self.race_set, race_totals=self.theta() * scale)

    def census_geo_table(self, scale: float = 1.0) -> GeoTable:
        """Exact census-style geography counts: count(g, r) = scale * Pr[g, r]."""
        joint_gr = self.mass.sum(axis=(2, 3)).T * scale
        rows = {g: joint_gr[i] for i, g in enumerate(self.geo_ids)}
        return GeoTable(rows, self.race_set)

    def rounded_census_tables(self, scale: float = 1_000_000):
        """Integer-count census tables for file emission.

        Rounding loses a little exactness; zero rows get a single count so the
        geography table invariant holds.
        """
        joint_sr = np.rint(self.mass.sum(axis=(1, 3)).T * scale)
        surname_rows = {s: joint_sr[i] for i, s in enumerate(self.surnames)}
        totals = np.maximum(np.rint(self.theta() * scale), joint_sr.sum(axis=0))
        surname = SurnameTable(surname_rows, self.race_set, race_totals=totals)
        joint_gr = np.rint(self.mass.sum(axis=(2, 3)).T * scale)
        geo_rows = {}
        for i, g in enumerate(self.geo_ids):
            row = joint_gr[i]
            if row.sum() <= 0:
                row = row.copy()
                row[int(np.argmax(self.mass.sum(axis=(2, 3))[:, i]))] = 1
            geo_rows[g] = row
        return surname, GeoTable(geo_rows, self.race_set)

    # -- serialization -------------------------------------------------------

    def save_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["r", "g", "s", "y", "mass"])
            k, gn, sn, _ = self.mass.shape
            for r in range(k):
                for g in range(gn):
                    for s in range(sn):
                        for y in (0, 1):
                            m = self.mass[r, g, s, y]
                            if m > 0:
                                writer.writerow(
                                    [
                                        self.race_set[r],
                                        self.geo_ids[g],
                                        self.surnames[s],
                                        y,
                                        f"{m:.17g}",
                                    ]
                                )

    @classmethod
    def load_csv(cls, path) -> "JointTable":
        races, geos, surnames = [], [], []
        entries = []
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["r", "g", "s", "y", "mass"]:
                raise InvalidConfigError(f"{path}: unexpected header {header}")
            for row in reader:
                if not row:
                    continue
                r, g, s, y, m = row[0], row[1], row[2], int(row[3]), float(row[4])
                if r not in races:
                    races.append(r)
                if g not in geos:
                    geos.append(g)
                if s not in surnames:
                    surnames.append(s)
                entries.append((r, g, s, y, m))
        race_set = RaceSet(tuple(races))
        mass = np.zeros((len(races), len(geos), len(surnames), 2))
        ri = {r: i for i, r in enumerate(races)}
        gi = {g: i for i, g in enumerate(geos)}
        si = {s: i for i, s in enumerate(surnames)}
        for r, g, s, y, m in entries:
            mass[ri[r], gi[g], si[s], y] = m
        total = mass.sum()
        if abs(total - 1.0) > 1e-9:
            raise InvalidConfigError(f"{path}: masses sum to {total!r}")
        mass /= total
        return cls(race_set, geos, surnames, mass)


def build_joint(config: DgpConfig) -> JointTable:
    """Enumerate the exact joint table for a configuration; no sampling."""
    v = config.assumption1_violation
    surname_part = config.surname_given_race[:, None, :]
    if v > 0:
        surname_part = (1 - v) * surname_part + v * config.surname_given_race_geo
    base = (
        config.theta[:, None, None]
        * config.geo_given_race[:, :, None]
        * surname_part
    )
    rates = config.outcome_rates[:, :, None]
    mass = np.stack([base * (1 - rates), base * rates], axis=-1)
    mass = mass / mass.sum()
    return JointTable(config.race_set, config.geo_ids, config.surnames, mass)


# ---------------------------------------------------------------------------
# random configurations
# ---------------------------------------------------------------------------


def _concentrated_rows(rng, n_rows, n_cols, owners, concentration):
    """Row-stochastic matrix where row r concentrates on the columns it owns."""
    weights = rng.uniform(0.5, 1.5, size=(n_rows, n_cols))
    owned = np.zeros((n_rows, n_cols), dtype=bool)
    for col, owner in enumerate(owners):
        owned[owner, col] = True
    boost = concentration / max(1e-12, 1 - concentration)
    weights = weights * np.where(owned, boost, 1.0)
    return weights / weights.sum(axis=1, keepdims=True)


def random_dgp(
    seed: int,
    n_races: int = 3,
    n_geos: int = 50,
    n_surnames: int = 200,
    outcome: str = "correlated",
    min_rate_gap: float = 0.3,
    segregation: float = 0.93,
    surname_concentration: float = 0.9,
    assumption1_violation: float = 0.0,
    race_labels=None,
) -> DgpConfig:
    """Seeded random configuration with controllable structure.

    ``outcome`` selects the outcome model: "correlated" gives per-race base
    rates spread at least ``min_rate_gap`` apart with small per-geography
    jitter; "independent" makes the rate depend on geography only, so the
    outcome carries no race signal beyond the observable cell; "uniform"
    also removes the geography dependence.
    """
    rng = np.random.default_rng(seed)
    k = n_races
    labels = (
        tuple(race_labels)
        if race_labels is not None
        else tuple(f"race{i + 1}" for i in range(k))
    )
    race_set = RaceSet(labels)
    geo_ids = tuple(f"G{i:03d}" for i in range(n_geos))
    surnames = tuple(f"S{i:04d}" for i in range(n_surnames))

    theta = rng.dirichlet(5.0 * np.ones(k))
    theta = np.maximum(theta, 0.08)
    theta = theta / theta.sum()

    geo_owner = [int(rng.choice(k, p=theta)) for _ in range(n_geos)]
    # every race owns at least one geography so compositions stay diverse
    for r in range(k):
        if r not in geo_owner:
            geo_owner[int(rng.integers(n_geos))] = r
    geo_given_race = _concentrated_rows(rng, k, n_geos, geo_owner, segregation)

    surname_owner = [int(rng.choice(k, p=theta)) for _ in range(n_surnames)]
    for r in range(k):
        if r not in surname_owner:
            surname_owner[int(rng.integers(n_surnames))] = r
    surname_given_race = _concentrated_rows(
        rng, k, n_surnames, surname_owner, surname_concentration
    )

    if outcome == "correlated":
        base = np.linspace(0.15, 0.15 + min_rate_gap, k)
        rng.shuffle(base)
        jitter = rng.uniform(-0.05, 0.05, size=(1, n_geos))
        rates = np.clip(base[:, None] + jitter, 0.02, 0.98)
    elif outcome == "independent":
        rates = np.tile(rng.uniform(0.2, 0.8, size=(1, n_geos)), (k, 1))
    elif outcome == "uniform":
        rates = np.full((k, n_geos), float(rng.uniform(0.3, 0.7)))
    else:
        raise InvalidConfigError(f"unknown outcome model {outcome!r}")

    surname_rg = None
    if assumption1_violation > 0:
        surname_rg = rng.dirichlet(
            np.full(n_surnames, 0.5), size=(k, n_geos)
        )
    return DgpConfig(
        race_set=race_set,
        geo_ids=geo_ids,
        surnames=surnames,
        theta=theta,
        geo_given_race=geo_given_race,
        surname_given_race=surname_given_race,
        outcome_rates=rates,
        assumption1_violation=assumption1_violation,
        surname_given_race_geo=surname_rg,
        seed=seed,
    )


def smooth_dgp(
    seed: int,
    n_races: int = 3,
    n_geos: int = 12,
    n_surnames: int = 30,
    geo_jitter: float = 0.25,
    surname_jitter: float = 0.5,
    outcome: str = "independent",
    min_rate_gap: float = 0.5,
) -> DgpConfig:
    """Mildly varying population: no segregated geographies or dominant names.

    Race conditionals stay well inside the probability simplex, which keeps
    log-probabilities nearly affine over the support; useful when comparing
    learned proxies against exact conditionals without boundary effects.
    """
    rng = np.random.default_rng(seed)
    k = n_races
    race_set = RaceSet(tuple(f"race{i + 1}" for i in range(k)))
    theta = rng.dirichlet(20.0 * np.ones(k))
    gg = 1 + geo_jitter * rng.random((k, n_geos))
    gg /= gg.sum(axis=1, keepdims=True)
    sg = 1 + surname_jitter * rng.random((k, n_surnames))
    sg /= sg.sum(axis=1, keepdims=True)
    if outcome == "independent":
        rates = np.tile(rng.uniform(0.25, 0.75, size=(1, n_geos)), (k, 1))
    elif outcome == "correlated":
        base = np.linspace(0.2, 0.2 + min_rate_gap, k)
        rng.shuffle(base)
        rates = np.clip(
            base[:, None] + rng.uniform(-0.05, 0.05, size=(1, n_geos)), 0.02, 0.98
        )
    else:
        raise InvalidConfigError(f"unknown outcome model {outcome!r}")
    return DgpConfig(
        race_set=race_set,
        geo_ids=tuple(f"G{i:03d}" for i in range(n_geos)),
        surnames=tuple(f"S{i:04d}" for i in range(n_surnames)),
        theta=theta,
        geo_given_race=gg,
        surname_given_race=sg,
        outcome_rates=rates,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _records_from_flat(table: JointTable, flat_indices, n_covariates, rng, covariate_noise):
    k, gn, sn, _ = table.mass.shape
    r_idx, g_idx, s_idx, y_idx = np.unravel_index(flat_indices, (k, gn, sn, 2))
    n = len(flat_indices)
    covariates = np.zeros((n, n_covariates))
    if n_covariates:
        race_coef = rng.normal(0.0, 1.0, size=(n_covariates, k))
        geo_coef = rng.normal(0.0, 0.5, size=(n_covariates, gn))
        noise = rng.normal(0.0, covariate_noise, size=(n, n_covariates))
        covariates = race_coef[:, r_idx].T + geo_coef[:, g_idx].T + noise
    return SupplementalDataset(
        ids=[str(i) for i in range(n)],
        surnames=[table.surnames[i] for i in s_idx],
        geos=[table.geo_ids[i] for i in g_idx],
        contexts=y_idx,
        covariates=covariates,
        races=[table.race_set[i] for i in r_idx],
        race_set=table.race_set,
    )


def sample_population(
    table: JointTable,
    n: int,
    seed: int,
    n_covariates: int = 0,
    covariate_noise: float = 1.0,
) -> SupplementalDataset:
    """Draw n labeled records i.i.d. from the joint table, deterministically.

    Optional covariates are noisy linear functions of (race, geography) with
    seeded coefficients.
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    flat = rng.choice(table.mass.size, size=n, p=table.mass.ravel())
    return _records_from_flat(table, flat, n_covariates, rng, covariate_noise)


def sample_per_cell(
    table: JointTable, per_cell: int, seed: int
) -> SupplementalDataset:
    """Stratified sample: ``per_cell`` draws from each (geo, context) cell."""
    rng = np.random.default_rng(seed)
    k, gn, sn, _ = table.mass.shape
    flat_all = []
    for g in range(gn):
        for y in (0, 1):
            cell = table.mass[:, g, :, y]
            total = cell.sum()
            if total <= 0:
                continue
            local = rng.choice(cell.size, size=per_cell, p=cell.ravel() / total)
            r_idx, s_idx = np.unravel_index(local, cell.shape)
            flat_all.append(
                np.ravel_multi_index(
                    (r_idx, np.full(per_cell, g), s_idx, np.full(per_cell, y)),
                    (k, gn, sn, 2),
                )
            )
    flat = np.concatenate(flat_all)
    return _records_from_flat(table, flat, 0, rng, 0.0)


# ---------------------------------------------------------------------------
# oracle proxies
# ---------------------------------------------------------------------------


class _TableProxyBase(ContextualProxy):
    """Shared lookup plumbing for proxies backed by per-cell probability grids."""

    def __init__(self, table: JointTable, grid: np.ndarray):
        self._table = table
        # grid is (G, S, 2, K): probability rows per (geo, surname, context)
        grid = np.asarray(grid, dtype=float)
        grid.setflags(write=False)
        self._grid = grid

    @property
    def race_set(self) -> RaceSet:
        return self._table.race_set

    def _indices(self, dataset: SupplementalDataset):
        gi = self._table._geo_index
        si = self._table._surname_index
        try:
            g_idx = np.fromiter((gi[g] for g in dataset.geos), dtype=int, count=len(dataset))
            s_idx = np.fromiter(
                (si[s] for s in dataset.surnames), dtype=int, count=len(dataset)
            )
        except KeyError as exc:
            raise ZeroMassEventError(
                f"identifier {exc.args[0]!r} is not part of this population"
            ) from None
        return g_idx, s_idx

    def evaluate_one(self, record, context) -> RaceDistribution:
        y = check_context(context)
        gi = self._table._geo_index.get(record.geo)
        si = self._table._surname_index.get(record.surname)
        if gi is None or si is None:
            raise ZeroMassEventError(
                f"record ({record.geo!r}, {record.surname!r}) is not part of this population"
            )
        return RaceDistribution(self._grid[gi, si, y])

    def evaluate(self, dataset: SupplementalDataset, context) -> np.ndarray:
        y = check_context(context)
        if len(dataset) == 0:
            return np.zeros((0, len(self.race_set)))
        g_idx, s_idx = self._indices(dataset)
        return self._grid[g_idx, s_idx, y]


def _conditional_grid(table: JointTable, use_surname: bool) -> np.ndarray:
    """Exact Pr[race | geo(, surname), context] grid with zero-mass fallback.

    Cells whose conditioning event has zero mass fall back to Pr[race |
    context].
    """
    k, gn, sn, _ = table.mass.shape
    if use_surname:
        cell = np.transpose(table.mass, (1, 2, 3, 0))  # (G, S, 2, K)
    else:
        geo_mass = table.mass.sum(axis=2)  # (K, G, 2)
        cell = np.transpose(geo_mass, (1, 2, 0))[:, None, :, :]  # (G, 1, 2, K)
        cell = np.broadcast_to(cell, (gn, sn, 2, k)).copy()
    totals = cell.sum(axis=-1, keepdims=True)
    fallback = np.empty((2, k))
    for y in (0, 1):
        fallback[y] = [table.phi(r, y) for r in table.race_set]
    grid = np.where(totals > 0, cell / np.where(totals > 0, totals, 1.0), fallback)
    return grid


def conditional_proxy(table: JointTable, use_surname: bool = True) -> ContextualProxy:
    """Exact conditional Pr[race | geography(, surname), context] as a proxy."""
    return _TableProxyBase(table, _conditional_grid(table, use_surname))


def calibrated_proxy(table: JointTable) -> ContextualProxy:
    """Exact context-free conditional Pr[race | geography, surname].

    The classic calibrated proxy: both contexts receive the same output.
    """
    joint_x = table.mass.sum(axis=3)  # (K, G, S)
    cell = np.transpose(joint_x, (1, 2, 0))  # (G, S, K)
    totals = cell.sum(axis=-1, keepdims=True)
    theta = table.theta()
    rows = np.where(totals > 0, cell / np.where(totals > 0, totals, 1.0), theta)
    grid = np.broadcast_to(rows[:, :, None, :], cell.shape[:2] + (2, len(theta))).copy()
    return _TableProxyBase(table, grid)


def mean_consistent_proxy(table: JointTable) -> ContextualProxy:
    """Exact-oracle contextual proxy that is mean consistent by construction.

    Starts from the exact conditional Pr[race | geo, surname, context] and
    mixes it, per context, toward a fixed distribution chosen so that the
    *population-weighted* mean of the proxy at context y equals
    Pr[race | outcome = y] exactly.  The raw conditional does not have that
    property in general, because the population mean weights records by their
    marginal frequency rather than their frequency within the context.
    """
    k, gn, sn, _ = table.mass.shape
    grid = _conditional_grid(table, use_surname=True).copy()
    px = table.mass.sum(axis=(0, 3))  # (G, S) marginal over records
    px = px / px.sum()
    for y in (0, 1):
        phi = np.array([table.phi(r, y) for r in table.race_set])
        marginal_mean = np.einsum("gs,gsk->k", px, grid[:, :, y, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(marginal_mean > 0, phi / np.where(marginal_mean > 0, marginal_mean, 1.0), 1.0)
        beta = float(np.max(np.maximum(0.0, 1.0 - ratio)))
        if beta <= 1e-14:
            correction = phi
            beta = 0.0
        else:
            beta = min(beta, 1.0)
            correction = (phi - (1 - beta) * marginal_mean) / beta
            correction = np.maximum(correction, 0.0)
            correction = correction / correction.sum()
        grid[:, :, y, :] = (1 - beta) * grid[:, :, y, :] + beta * correction[None, None, :]
    return _TableProxyBase(table, grid)


class ConstantContextProxy(ContextualProxy):
    """Proxy returning one fixed distribution per context, for every record."""

    def __init__(self, race_set: RaceSet, probs_context0, probs_context1):
        self._race_set = race_set
        self._rows = (
            RaceDistribution(np.asarray(probs_context0, float)),
            RaceDistribution(np.asarray(probs_context1, float)),
        )

    @property
    def race_set(self) -> RaceSet:
        return self._race_set

    def evaluate_one(self, record, context) -> RaceDistribution:
        return self._rows[check_context(context)]

    def evaluate(self, dataset, context) -> np.ndarray:
        y = check_context(context)
        return np.tile(self._rows[y].probs, (len(dataset), 1))


class MixtureProxy(ContextualProxy):
    """Convex combination of a base proxy with fixed per-context targets.

    Output at context y is (1 - weight_y) * base(x, y) + weight_y * target_y.
    Used to manufacture proxies with controlled consistency violations.
    """

    def __init__(self, base: ContextualProxy, targets_by_context, weights_by_context):
        self._base = base
        self._targets = tuple(
            np.asarray(t, dtype=float) for t in targets_by_context
        )
        self._weights = tuple(float(w) for w in weights_by_context)
        if len(self._targets) != 2 or len(self._weights) != 2:
            raise ValueError("need one target and one weight per context")
        for w in self._weights:
            if not 0 <= w <= 1:
                raise ValueError(f"mixture weights must be in [0, 1], got {w}")

    @property
    def race_set(self) -> RaceSet:
        return self._base.race_set

    def evaluate_one(self, record, context) -> RaceDistribution:
        y = check_context(context)
        base = self._base.evaluate_one(record, y).probs
        return RaceDistribution(
            (1 - self._weights[y]) * base + self._weights[y] * self._targets[y]
        )

    def evaluate(self, dataset, context) -> np.ndarray:
        y = check_context(context)
        base = self._base.evaluate(dataset, y)
        return (1 - self._weights[y]) * base + self._weights[y] * self._targets[y][None, :]
