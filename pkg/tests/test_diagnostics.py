import numpy as np
import pytest

from fairproxy import (
    ConstantContextProxy,
    MixtureProxy,
    RaceSet,
    SupplementalDataset,
    bayes_estimate,
    binned_violation_profile,
    bound_sweep,
    build_joint,
    consistency_report,
    consistency_violation,
    implied_violation_bound,
    mean_consistent_proxy,
    proxy_context_means,
    random_dgp,
    sample_population,
    sufficient_violation_bound,
    true_positive_rate,
    weighted_bias_oracle,
    weighted_estimate,
)
from fairproxy.errors import DegenerateBoundError, EmptyContextError
from fairproxy.simulator import DgpConfig, calibrated_proxy

RS2 = RaceSet(("a", "b"))


def dataset(races, contexts, geos=None):
    n = len(races)
    return SupplementalDataset(
        ids=[str(i) for i in range(n)],
        surnames=["S"] * n,
        geos=geos or ["G"] * n,
        contexts=contexts,
        races=races,
        race_set=RS2,
    )


class TestConsistencyViolation:
    def test_definitional_zero(self):
        rng = np.random.default_rng(0)
        races = [RS2[i] for i in rng.integers(0, 2, size=40)]
        contexts = rng.integers(0, 2, size=40)
        ds = dataset(races, contexts)
        phi = {
            y: np.array(
                [np.mean([r == l for r, c in zip(races, contexts) if c == y]) for l in RS2]
            )
            for y in (0, 1)
        }
        proxy = ConstantContextProxy(RS2, phi[0], phi[1])
        for label in RS2:
            for y in (0, 1):
                assert consistency_violation(proxy, ds, label, y) < 1e-12

    def test_zero_proxy_boundary(self):
        ds = dataset(["a", "a", "b", "b"], [1, 0, 1, 0])
        proxy = ConstantContextProxy(RS2, [0, 1], [0, 1])
        # proxy puts no mass on race a: violation equals the empirical share
        assert consistency_violation(proxy, ds, "a", 1) == pytest.approx(0.5)

    def test_uniform_shift_recomputed_by_brute_force(self):
        cfg = random_dgp(301, n_geos=8, n_surnames=12)
        table = build_joint(cfg)
        pop = table.to_weighted_dataset()
        oracle = mean_consistent_proxy(table)
        k = len(table.race_set)
        for lam in (0.1, 0.37):
            shifted = MixtureProxy(oracle, (np.full(k, 1 / k), np.full(k, 1 / k)), (lam, lam))
            for i, race in enumerate(table.race_set):
                expected = lam * abs(table.phi(race, 1) - 1 / k)
                got = consistency_violation(shifted, pop, race, 1)
                assert got == pytest.approx(expected, abs=1e-12)

    def test_empty_context(self):
        ds = dataset(["a", "b"], [1, 1])
        proxy = ConstantContextProxy(RS2, [0.5, 0.5], [0.5, 0.5])
        with pytest.raises(EmptyContextError):
            consistency_violation(proxy, ds, "a", 0)


class TestConsistencyReport:
    def test_plugins_and_gamma(self):
        cfg = random_dgp(303, n_geos=6, n_surnames=10)
        table = build_joint(cfg)
        pop = table.to_weighted_dataset()
        oracle = mean_consistent_proxy(table)
        report = consistency_report(oracle, pop)
        assert np.all(report.gamma < 1e-12)
        assert report.nu == pytest.approx(table.nu(), abs=1e-12)
        assert np.allclose(report.theta, table.theta(), atol=1e-12)
        for e in report.entries:
            assert e.violation < 1e-12
        assert dict(report.plugins)["theta"] == "empirical"
        payload = report.to_dict()
        assert payload["schema"] == 1
        assert set(payload["theta"]) == set(table.race_set)


class TestBinnedProfile:
    def test_identical_geographies_single_bin(self):
        # every geography holds five race-a records at the same 3/5 rate
        races, contexts, geos = [], [], []
        for g in range(4):
            for j in range(5):
                races.append("a")
                contexts.append(1 if j < 3 else 0)
                geos.append(f"G{g}")
            races.append("b")
            contexts.append(0)
            geos.append(f"G{g}")
        ds = dataset(races, contexts, geos=geos)
        proxy = ConstantContextProxy(RS2, [0.5, 0.5], [0.5, 0.5])
        profile = binned_violation_profile(proxy, ds, "a", 1, bins=8)
        assert len(profile) == 1
        assert profile[0].size == 4

    def test_membership_partition(self):
        rng = np.random.default_rng(5)
        n = 400
        geos = [f"G{i % 25}" for i in range(n)]
        races = [RS2[i] for i in rng.integers(0, 2, size=n)]
        contexts = rng.integers(0, 2, size=n)
        ds = dataset(races, contexts, geos=geos)
        proxy = ConstantContextProxy(RS2, [0.4, 0.6], [0.7, 0.3])
        profile = binned_violation_profile(proxy, ds, "a", 1, bins=8)
        geos_with_group = {
            g for g, r in zip(geos, races) if r == "a"
        }
        assert sum(b.size for b in profile) == len(geos_with_group)

    def test_oracle_proxy_within_noise(self):
        # geography-level proxy on a population with constant outcome rate
        # per geography composition: per-bin residuals are pure noise
        rng = np.random.default_rng(11)
        k, g_n, s_n = 3, 30, 10
        rs = RaceSet(("r1", "r2", "r3"))
        comp = rng.dirichlet(np.full(k, 4.0), size=g_n)  # per-geo composition
        sizes = np.full(g_n, 1.0 / g_n)
        joint_gr = comp * sizes[:, None]
        theta = joint_gr.sum(axis=0)
        geo_given_race = (joint_gr / theta[None, :]).T
        surname_given_race = np.tile(np.full(s_n, 1.0 / s_n), (k, 1))
        nu_target = 0.45
        rates = np.empty((k, g_n))
        for g in range(g_n):
            # race-varying rates around the target whose composition-weighted
            # mean is exactly the target; halve the spread until feasible
            d = rng.uniform(-0.25, 0.25, size=k - 1)
            while True:
                last = (nu_target - comp[g, :-1] @ (nu_target + d)) / comp[g, -1]
                if 0.02 <= last <= 0.98:
                    break
                d *= 0.5
            rates[:-1, g] = nu_target + d
            rates[-1, g] = last
        config = DgpConfig(
            race_set=rs,
            geo_ids=tuple(f"G{i:03d}" for i in range(g_n)),
            surnames=tuple(f"S{i:02d}" for i in range(s_n)),
            theta=theta,
            geo_given_race=geo_given_race,
            surname_given_race=surname_given_race,
            outcome_rates=rates,
        )
        table = build_joint(config)
        # verify the construction: Pr[outcome=1 | geo] is constant
        p_y1_g = table.mass[..., 1].sum(axis=(0, 2)) / table.mass.sum(axis=(0, 2, 3))
        assert np.allclose(p_y1_g, p_y1_g[0], atol=1e-9)
        from fairproxy import conditional_proxy

        proxy = conditional_proxy(table, use_surname=False)
        ds = sample_population(table, 60_000, seed=13)
        for race in rs:
            profile = binned_violation_profile(proxy, ds, race, 1, bins=8)
            for b in profile:
                if b.n_records >= 50 and np.isfinite(b.violation):
                    assert b.violation <= 3.0 / np.sqrt(b.n_records)

    def test_bins_validated(self):
        ds = dataset(["a", "b"], [1, 0])
        proxy = ConstantContextProxy(RS2, [0.5, 0.5], [0.5, 0.5])
        with pytest.raises(ValueError):
            binned_violation_profile(proxy, ds, "a", 1, bins=1)


class TestBounds:
    def test_gamma_zero_form(self):
        assert sufficient_violation_bound(0.1, 0.3, 0.5, 0.0, 0.4) == pytest.approx(
            0.1 * 0.3 / 0.5
        )
        assert implied_violation_bound(0.1, 0.3, 0.5, 0.0, 0.7) == pytest.approx(
            0.1 * 0.3 / 0.5
        )

    def test_zero_epsilon_zero_gamma(self):
        assert sufficient_violation_bound(0.0, 0.3, 0.5, 0.0, 0.4) == 0.0
        assert implied_violation_bound(0.0, 0.3, 0.5, 0.0, 0.7) == 0.0

    def test_degenerate_reported(self):
        with pytest.raises(DegenerateBoundError):
            sufficient_violation_bound(0.1, 0.2, 0.5, 0.25, 0.4)  # gamma >= theta
        with pytest.raises(DegenerateBoundError):
            sufficient_violation_bound(0.001, 0.3, 0.9, 0.2, 0.9)  # negative bound

    def test_sweep_no_counterexamples(self):
        sweep = bound_sweep(25, seed=7)
        assert sweep["summary"]["failures"] == 0
        assert sweep["summary"]["premise_true"] > 0

    def test_sampled_level_with_slack(self):
        # plug-ins from a finite sample: bounds hold up to binomial noise
        cfg = random_dgp(307, n_geos=10, n_surnames=20)
        table = build_joint(cfg)
        proxy = mean_consistent_proxy(table)
        n = 40_000
        ds = sample_population(table, n, seed=17)
        slack = 3.0 / np.sqrt(n)
        means = proxy_context_means(proxy, ds)
        nu = float((ds.contexts == 1).mean())
        for i, race in enumerate(table.race_set):
            mu_hat = bayes_estimate(proxy, ds, race)
            mu_true = true_positive_rate(ds, race)
            violation = consistency_violation(proxy, ds, race, 1)
            theta = float(np.mean([r == race for r in ds.races]))
            rho = (1 - nu) * means[0, i] + nu * means[1, i]
            gamma = abs(rho - theta)
            epsilon = abs(mu_hat - mu_true) + slack
            bound = implied_violation_bound(epsilon, theta, nu, gamma, mu_hat)
            assert violation <= bound + slack


class TestEquivalenceLoop:
    def test_zero_violation_gives_exact_estimates(self):
        for seed in (401, 402, 403):
            cfg = random_dgp(seed, n_geos=8, n_surnames=12)
            table = build_joint(cfg)
            pop = table.to_weighted_dataset()
            proxy = mean_consistent_proxy(table)
            for race in table.race_set:
                assert consistency_violation(proxy, pop, race, 1) < 1e-12
                assert abs(
                    bayes_estimate(proxy, pop, race) - table.positive_rate(race)
                ) < 1e-12

    def test_violation_forces_bias_when_marginal_correct(self):
        # keep the marginal race mass exact (gamma = 0) but shift the two
        # context means oppositely: the estimate must move off the truth by
        # exactly violation * nu / theta
        cfg = random_dgp(404, n_geos=8, n_surnames=12)
        table = build_joint(cfg)
        pop = table.to_weighted_dataset()
        race = table.race_set[0]
        nu = table.nu()
        theta = float(table.theta()[0])
        phi1, phi0 = table.phi(race, 1), table.phi(race, 0)
        k = len(table.race_set)
        for delta in (0.01, 0.04):
            shift1 = np.zeros(k)
            shift1[0] = delta
            shift1[1:] = -delta / (k - 1)
            shift0 = -shift1 * nu / (1 - nu)
            proxy = ConstantContextProxy(
                table.race_set,
                np.array([phi0, *np.full(k - 1, (1 - phi0) / (k - 1))]) + shift0,
                np.array([phi1, *np.full(k - 1, (1 - phi1) / (k - 1))]) + shift1,
            )
            violation = consistency_violation(proxy, pop, race, 1)
            assert violation == pytest.approx(delta, abs=1e-12)
            bias = abs(bayes_estimate(proxy, pop, race) - table.positive_rate(race))
            assert bias > 0
            # the implied bound is tight at gamma = 0
            bound = implied_violation_bound(bias, theta, nu, 0.0, bayes_estimate(proxy, pop, race))
            assert violation <= bound + 1e-10


class TestWeightedBiasOracle:
    def test_independence_gives_zero(self):
        cfg = random_dgp(501, n_geos=8, n_surnames=12, outcome="independent")
        table = build_joint(cfg)
        for race in table.race_set:
            assert abs(weighted_bias_oracle(table, race)) < 1e-12

    def test_within_cell_disadvantage_inflates_rate(self):
        # the group with uniformly lower within-cell rates must have its rate
        # over-estimated (positive gap), shrinking the estimated disparity
        rng = np.random.default_rng(9)
        k, g_n, s_n = 2, 6, 8
        rs = RS2
        geo_given_race = rng.dirichlet(np.ones(g_n), size=k)
        surname_given_race = rng.dirichlet(np.ones(s_n), size=k)
        rates = np.vstack([np.full(g_n, 0.3), np.full(g_n, 0.7)])
        config = DgpConfig(
            race_set=rs,
            geo_ids=tuple(f"G{i}" for i in range(g_n)),
            surnames=tuple(f"S{i}" for i in range(s_n)),
            theta=np.array([0.5, 0.5]),
            geo_given_race=geo_given_race,
            surname_given_race=surname_given_race,
            outcome_rates=rates,
        )
        table = build_joint(config)
        assert weighted_bias_oracle(table, "a") > 0  # disadvantaged in every cell
        assert weighted_bias_oracle(table, "b") < 0

    def test_matches_empirical_gap(self):
        cfg = random_dgp(503, outcome="correlated", min_rate_gap=0.4, n_geos=20, n_surnames=40)
        table = build_joint(cfg)
        ds = sample_population(table, 100_000, seed=19)
        proxy = calibrated_proxy(table)
        probs = proxy.evaluate(ds, 0)
        outcomes = ds.contexts.astype(float)
        for i, race in enumerate(table.race_set):
            gap = weighted_estimate(probs[:, i], outcomes) - true_positive_rate(ds, race)
            assert gap == pytest.approx(weighted_bias_oracle(table, race), abs=0.01)
