"""Mean-consistency measurement and numerical verification of bias bounds.

The central diagnostic is the consistency violation: the gap between the
population mean of a contextual proxy at a context and the empirical share
of the race within that context.  Small violations certify small bias for
the ratio estimator, and conversely; the two bound functions below quantify
both directions, and ``bound_sweep`` exercises them on seeded populations
where every plug-in quantity is exact.
"""

from dataclasses import dataclass

import numpy as np

from .domain import ContextualProxy, check_context
from .errors import DegenerateBoundError, EmptyContextError
from .estimators import bayes_estimates, true_positive_rate
from .tables import SupplementalDataset


def proxy_context_means(proxy: ContextualProxy, dataset: SupplementalDataset) -> np.ndarray:
    """(2, K) matrix of the proxy's mean output over all records per context."""
    w = dataset.effective_weights()
    total = w.sum()
    means = np.empty((2, len(proxy.race_set)))
    for y in (0, 1):
        means[y] = (w @ proxy.evaluate(dataset, y)) / total
    return means


def empirical_phi(dataset: SupplementalDataset, race: str, context) -> float:
    """Empirical Pr[race | outcome = context]."""
    dataset.require_labels()
    y = check_context(context)
    w = dataset.effective_weights()
    mask_y = dataset.contexts == y
    total = float(w[mask_y].sum())
    if total <= 0:
        raise EmptyContextError(f"no record has context {y}")
    in_group = np.array([r == race for r in dataset.races])
    return float(w[mask_y & in_group].sum() / total)


def consistency_violation(
    proxy: ContextualProxy, dataset: SupplementalDataset, race: str, context
) -> float:
    """|mean over all records of proxy(x, y) - empirical Pr[race | outcome=y]|.

    The proxy mean runs over the whole dataset, matching the ratio
    estimator's counterfactual sums, not just the records observed at the
    context.
    """
    y = check_context(context)
    k = proxy.race_set.index(race)
    phi = empirical_phi(dataset, race, y)
    omega_bar = proxy_context_means(proxy, dataset)[y, k]
    return abs(float(omega_bar) - phi)


@dataclass(frozen=True)
class ConsistencyEntry:
    race: str
    context: int
    omega_bar: float
    phi: float
    violation: float


@dataclass(frozen=True, eq=False)
class ConsistencyReport:
    """Per-(race, context) violations plus the global plug-in quantities.

    ``rho`` is the proxy's marginal race mass, the context-rate-weighted
    average of its per-context means; ``gamma`` its absolute gap to the
    empirical race share ``theta``.  ``plugins`` records that every quantity
    is an empirical plug-in from the supplied dataset.
    """

    races: tuple
    entries: tuple
    theta: np.ndarray
    nu: float
    rho: np.ndarray
    gamma: np.ndarray
    n: float
    plugins: tuple = (
        ("theta", "empirical"),
        ("nu", "empirical"),
        ("rho", "empirical"),
        ("omega_bar", "empirical"),
        ("phi", "empirical"),
    )

    def entry(self, race: str, context: int) -> ConsistencyEntry:
        for e in self.entries:
            if e.race == race and e.context == context:
                return e
        raise KeyError((race, context))

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "n": float(self.n),
            "nu": float(self.nu),
            "theta": {r: float(t) for r, t in zip(self.races, self.theta)},
            "rho": {r: float(v) for r, v in zip(self.races, self.rho)},
            "gamma": {r: float(v) for r, v in zip(self.races, self.gamma)},
            "entries": [
                {
                    "race": e.race,
                    "context": e.context,
                    "omega_bar": e.omega_bar,
                    "phi": e.phi,
                    "violation": e.violation,
                }
                for e in self.entries
            ],
            "plugins": {name: kind for name, kind in self.plugins},
        }


def consistency_report(proxy: ContextualProxy, dataset: SupplementalDataset) -> ConsistencyReport:
    """Measure violations and plug-in quantities for every race and context."""
    dataset.require_labels()
    rs = proxy.race_set
    w = dataset.effective_weights()
    total = float(w.sum())
    n0, n1 = dataset.context_counts()
    if n0 <= 0 or n1 <= 0:
        raise EmptyContextError("both context values must be present")
    nu = n1 / total
    means = proxy_context_means(proxy, dataset)
    theta = np.array(
        [float(w[[r == label for r in dataset.races]].sum()) / total for label in rs]
    )
    rho = (1 - nu) * means[0] + nu * means[1]
    gamma = np.abs(rho - theta)
    entries = []
    for i, label in enumerate(rs):
        for y in (0, 1):
            phi = empirical_phi(dataset, label, y)
            entries.append(
                ConsistencyEntry(
                    race=label,
                    context=y,
                    omega_bar=float(means[y, i]),
                    phi=phi,
                    violation=abs(float(means[y, i]) - phi),
                )
            )
    return ConsistencyReport(
        races=tuple(rs),
        entries=tuple(entries),
        theta=theta,
        nu=nu,
        rho=rho,
        gamma=gamma,
        n=total,
    )


@dataclass(frozen=True)
class ProfileBin:
    """One reliability-style bin of the binned violation profile."""

    center: float
    violation: float
    size: int
    n_records: float


def binned_violation_profile(
    proxy: ContextualProxy,
    dataset: SupplementalDataset,
    race: str,
    context,
    bins: int = 8,
) -> list:
    """Consistency violations grouped by the within-geography positive rate.

    Geographies are bucketed by their empirical rate of outcome 1 among
    race-``race`` members into equal-width bins over [0, 1]; each occupied
    bin reports the violation computed on its pooled records at ``context``,
    its member-geography count, and its pooled record weight.  Geographies
    with no race-``race`` member carry no rate and are excluded.
    """
    if bins < 2:
        raise ValueError(f"need at least 2 bins, got {bins}")
    dataset.require_labels()
    y = check_context(context)
    if not np.any(dataset.contexts == y):
        raise EmptyContextError(f"no record has context {y}")
    w = dataset.effective_weights()
    in_group = np.array([r == race for r in dataset.races])
    geo_rate = {}
    for geo in set(dataset.geos):
        mask = np.array([g == geo for g in dataset.geos]) & in_group
        total = float(w[mask].sum())
        if total <= 0:
            continue
        positive = float(w[mask & (dataset.contexts == 1)].sum())
        geo_rate[geo] = positive / total
    edges = np.linspace(0.0, 1.0, bins + 1)
    members = {}
    for geo, rate in geo_rate.items():
        b = min(int(np.searchsorted(edges, rate, side="right")) - 1, bins - 1)
        members.setdefault(b, []).append(geo)
    profile = []
    for b in sorted(members):
        geos = set(members[b])
        mask = np.array([g in geos for g in dataset.geos])
        sub = dataset.subset(mask)
        try:
            violation = consistency_violation(proxy, sub, race, y)
        except EmptyContextError:
            violation = float("nan")
        profile.append(
            ProfileBin(
                center=float((edges[b] + edges[b + 1]) / 2),
                violation=violation,
                size=len(geos),
                n_records=float(sub.effective_weights().sum()),
            )
        )
    return profile


# ---------------------------------------------------------------------------
# bias bounds
# ---------------------------------------------------------------------------


def sufficient_violation_bound(
    epsilon: float, theta_r: float, nu_f: float, gamma: float, omega_bar: float
) -> float:
    """Violation level under which the ratio estimator is epsilon-accurate.

    Returns epsilon * theta_r / nu_f - omega_bar * gamma / (theta_r - gamma).
    A proxy whose context-1 violation stays at or below this value, and whose
    marginal race mass is within gamma of theta_r, yields an estimate within
    epsilon of the true positive rate.  Degenerate combinations (gamma at
    least theta_r, or a negative bound) are reported as errors rather than
    clamped.
    """
    if nu_f <= 0:
        raise DegenerateBoundError(f"nu_f must be positive, got {nu_f}")
    if gamma < 0 or epsilon < 0:
        raise ValueError("epsilon and gamma must be nonnegative")
    if theta_r <= gamma:
        raise DegenerateBoundError(
            f"theta_r={theta_r} must exceed gamma={gamma} for the bound to exist"
        )
    bound = epsilon * theta_r / nu_f - omega_bar * gamma / (theta_r - gamma)
    if bound < 0:
        raise DegenerateBoundError(
            f"required consistency level is negative ({bound:.3g}); no violation "
            "level can certify this epsilon"
        )
    return float(bound)


def implied_violation_bound(
    epsilon: float, theta_r: float, nu_f: float, gamma: float, mu_bayes: float
) -> float:
    """Violation level implied by an epsilon-accurate ratio estimate.

    Returns epsilon * theta_r / nu_f + gamma * mu_bayes / nu_f.
    """
    if nu_f <= 0:
        raise DegenerateBoundError(f"nu_f must be positive, got {nu_f}")
    if gamma < 0 or epsilon < 0:
        raise ValueError("epsilon and gamma must be nonnegative")
    return float(epsilon * theta_r / nu_f + gamma * mu_bayes / nu_f)


def weighted_bias_oracle(table, race: str) -> float:
    """Exact asymptotic gap of the weighted estimator on a joint table.

    Returns the almost-sure limit of (weighted estimate - true positive
    rate) for the calibrated proxy Pr[race | cell]: minus the expected
    within-cell covariance between group membership and the outcome,
    normalized by the group mass.  A group that is treated worse than its
    cell-mates (negative within-cell covariance) gets its rate *over*
    estimated, which is what makes the weighted estimator under-report
    disparities.
    """
    r = table.race_set.index(race)
    mass = table.mass
    p_x = mass.sum(axis=(0, 3))  # (G, S)
    p_r_y1 = mass[r, :, :, 1]  # Pr[race, cell, outcome 1]
    p_r_x = mass[r].sum(axis=2)  # Pr[race, cell]
    p_y1_x = mass[:, :, :, 1].sum(axis=0)  # Pr[cell, outcome 1]
    theta_r = float(mass[r].sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(p_x > 0, p_r_x / np.where(p_x > 0, p_x, 1.0), 0.0)
    covariance = (p_r_y1 - rho * p_y1_x).sum()
    return float(-covariance / theta_r)


# ---------------------------------------------------------------------------
# seeded verification sweeps
# ---------------------------------------------------------------------------


def bound_sweep(
    n_instances: int,
    seed: int,
    n_geos: int = 12,
    n_surnames: int = 25,
    slack: float = 1e-12,
) -> dict:
    """Verify both bound directions on seeded exact populations.

    Each instance builds a random population, perturbs its mean-consistent
    oracle proxy toward a random target with per-context weights (creating a
    controlled violation and marginal-mass gap), computes every plug-in
    exactly from the enumerated table, and checks:

    * violation(context 1) <= sufficient bound  implies  |estimate - truth| <= epsilon
    * |estimate - truth| <= epsilon  implies  violation(context 1) <= implied bound

    Instances whose sufficient bound is degenerate are reported and excluded
    from the first check.  Returns per-instance records and a summary; any
    counterexample appears under ``failures``.
    """
    from . import simulator  # local import: diagnostics is otherwise table-free

    results = []
    failures = []
    degenerate = 0
    premise_true = 0
    for i in range(n_instances):
        instance_seed = seed * 100_003 + i
        rng = np.random.default_rng(instance_seed)
        config = simulator.random_dgp(
            instance_seed,
            n_geos=n_geos,
            n_surnames=n_surnames,
            outcome="correlated",
            min_rate_gap=float(rng.uniform(0.1, 0.5)),
        )
        table = simulator.build_joint(config)
        oracle = simulator.mean_consistent_proxy(table)
        k = len(table.race_set)
        targets = (rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k)))
        weights = (float(rng.uniform(0, 0.35)), float(rng.uniform(0, 0.35)))
        proxy = simulator.MixtureProxy(oracle, targets, weights)
        population = table.to_weighted_dataset()
        means = proxy_context_means(proxy, population)
        estimates = bayes_estimates(proxy, population)
        n0, n1 = population.context_counts()
        nu = n1 / (n0 + n1)
        for r_index, race in enumerate(table.race_set):
            theta_r = float(table.theta()[r_index])
            phi1 = table.phi(race, 1)
            omega_bar1 = float(means[1, r_index])
            violation = abs(omega_bar1 - phi1)
            rho = (1 - nu) * float(means[0, r_index]) + nu * omega_bar1
            gamma = abs(rho - theta_r)
            mu_true = true_positive_rate(population, race)
            mu_hat = float(estimates[r_index])
            bias = abs(mu_hat - mu_true)
            # odd races test the contrapositive with an epsilon below the bias
            if (i + r_index) % 2 == 0:
                epsilon = bias * float(rng.uniform(1.05, 3.0)) + 1e-9
            else:
                epsilon = bias * float(rng.uniform(0.3, 0.9))
            record = {
                "instance": i,
                "seed": instance_seed,
                "race": race,
                "epsilon": epsilon,
                "theta": theta_r,
                "nu": nu,
                "gamma": gamma,
                "omega_bar_1": omega_bar1,
                "violation_1": violation,
                "mu_true": mu_true,
                "mu_estimate": mu_hat,
                "bias": bias,
            }
            try:
                bound_fwd = sufficient_violation_bound(
                    epsilon, theta_r, nu, gamma, omega_bar1
                )
                record["sufficient_bound"] = bound_fwd
                record["degenerate"] = False
                if violation <= bound_fwd:
                    premise_true += 1
                    record["premise_holds"] = True
                    record["implication_holds"] = bias <= epsilon + slack
                else:
                    record["premise_holds"] = False
                    record["implication_holds"] = True
            except DegenerateBoundError as exc:
                degenerate += 1
                record["sufficient_bound"] = None
                record["degenerate"] = True
                record["degenerate_reason"] = str(exc)
                record["premise_holds"] = False
                record["implication_holds"] = True
            bound_rev = implied_violation_bound(epsilon, theta_r, nu, gamma, mu_hat)
            record["implied_bound"] = bound_rev
            if bias <= epsilon:
                record["converse_holds"] = violation <= bound_rev + slack
            else:
                record["converse_holds"] = True
            if not (record["implication_holds"] and record["converse_holds"]):
                failures.append(record)
            results.append(record)
    return {
        "schema": 1,
        "instances": n_instances,
        "seed": seed,
        "results": results,
        "summary": {
            "checked": len(results),
            "premise_true": premise_true,
            "degenerate": degenerate,
            "failures": len(failures),
        },
        "failures": failures,
    }
