import numpy as np
import pytest

from fairproxy import (
    BisgProxy,
    DgpConfig,
    JointTable,
    MixtureProxy,
    RaceSet,
    bayes_estimate,
    build_joint,
    calibrated_proxy,
    conditional_proxy,
    consistency_violation,
    l1_distance,
    mean_consistent_proxy,
    random_dgp,
    sample_per_cell,
    sample_population,
    smooth_dgp,
    weighted_bias_oracle,
)
from fairproxy.errors import InvalidConfigError, ZeroMassEventError


def tiny_config(**overrides):
    rs = RaceSet(("a", "b"))
    params = dict(
        race_set=rs,
        geo_ids=("G0", "G1", "G2"),
        surnames=("S0", "S1", "S2", "S3"),
        theta=np.array([0.6, 0.4]),
        geo_given_race=np.array([[0.5, 0.3, 0.2], [0.2, 0.3, 0.5]]),
        surname_given_race=np.array(
            [[0.4, 0.3, 0.2, 0.1], [0.1, 0.2, 0.3, 0.4]]
        ),
        outcome_rates=np.array([[0.7, 0.6, 0.5], [0.3, 0.4, 0.5]]),
    )
    params.update(overrides)
    return DgpConfig(**params)


class TestBuildJoint:
    def test_masses_sum_to_one(self):
        table = build_joint(tiny_config())
        assert abs(table.mass.sum() - 1.0) < 1e-12

    def test_independence_holds_cellwise(self):
        table = build_joint(tiny_config())
        mass = table.mass
        # Pr[surname | race, geo] must not depend on geo
        joint_rgs = mass.sum(axis=3)
        cond = joint_rgs / joint_rgs.sum(axis=2, keepdims=True)
        for r in range(2):
            for g in range(1, 3):
                assert np.allclose(cond[r, g], cond[r, 0], atol=1e-12)

    def test_outcome_constant_in_race_kills_bias_oracle(self):
        cfg = tiny_config(outcome_rates=np.array([[0.7, 0.4, 0.5], [0.7, 0.4, 0.5]]))
        table = build_joint(cfg)
        for race in ("a", "b"):
            assert abs(weighted_bias_oracle(table, race)) < 1e-14

    def test_uniform_everything_uniform_conditionals(self):
        rs = RaceSet(("a", "b"))
        cfg = DgpConfig(
            race_set=rs,
            geo_ids=("G0", "G1"),
            surnames=("S0", "S1"),
            theta=np.array([0.5, 0.5]),
            geo_given_race=np.full((2, 2), 0.5),
            surname_given_race=np.full((2, 2), 0.5),
            outcome_rates=np.full((2, 2), 0.5),
        )
        table = build_joint(cfg)
        for g in ("G0", "G1"):
            for s in ("S0", "S1"):
                for y in (0, 1):
                    assert np.allclose(
                        table.race_given(geo=g, surname=s, context=y).probs, 0.5
                    )

    def test_invalid_config_rejected(self):
        with pytest.raises(InvalidConfigError):
            tiny_config(theta=np.array([0.7, 0.4]))
        with pytest.raises(InvalidConfigError):
            tiny_config(outcome_rates=np.array([[1.5, 0.5, 0.5], [0.5, 0.5, 0.5]]))
        with pytest.raises(InvalidConfigError):
            tiny_config(assumption1_violation=0.5)  # needs the per-geo table


class TestSampling:
    def test_deterministic_under_seed(self):
        table = build_joint(tiny_config())
        a = sample_population(table, 500, seed=9)
        b = sample_population(table, 500, seed=9)
        assert a.ids == b.ids
        assert a.surnames == b.surnames
        assert np.array_equal(a.contexts, b.contexts)
        assert a.races == b.races

    def test_single_record(self):
        table = build_joint(tiny_config())
        ds = sample_population(table, 1, seed=0)
        assert len(ds) == 1
        assert ds.race_labels_present

    def test_empirical_frequencies_match_masses(self):
        table = build_joint(tiny_config())
        n = 100_000
        ds = sample_population(table, n, seed=1)
        counts = np.zeros_like(table.mass)
        ri = {r: i for i, r in enumerate(table.race_set)}
        gi = {g: i for i, g in enumerate(table.geo_ids)}
        si = {s: i for i, s in enumerate(table.surnames)}
        for i in range(n):
            counts[ri[ds.races[i]], gi[ds.geos[i]], si[ds.surnames[i]], ds.contexts[i]] += 1
        assert np.abs(counts / n - table.mass).max() <= 4.0 / np.sqrt(n)

    def test_per_cell_stratification(self):
        table = build_joint(tiny_config())
        ds = sample_per_cell(table, per_cell=50, seed=2)
        for g in table.geo_ids:
            for y in (0, 1):
                count = sum(
                    1 for i in range(len(ds)) if ds.geos[i] == g and ds.contexts[i] == y
                )
                assert count == 50

    def test_covariates_seeded(self):
        table = build_joint(tiny_config())
        a = sample_population(table, 100, seed=3, n_covariates=2)
        b = sample_population(table, 100, seed=3, n_covariates=2)
        assert np.array_equal(a.covariates, b.covariates)
        assert a.covariate_dim == 2


class TestOracleConditionals:
    def test_positive_rate_by_total_probability(self):
        cfg = tiny_config()
        table = build_joint(cfg)
        for i, race in enumerate(cfg.race_set):
            expected = float(cfg.geo_given_race[i] @ cfg.outcome_rates[i])
            assert table.positive_rate(race) == pytest.approx(expected, abs=1e-12)

    def test_bisg_formula_matches_when_independent(self):
        table = build_joint(tiny_config())
        model = BisgProxy(table.census_surname_table(), table.census_geo_table())
        for g in table.geo_ids:
            for s in table.surnames:
                exact = table.race_given(geo=g, surname=s)
                assert l1_distance(model.predict_one(s, g), exact) < 1e-12

    def test_bayes_rule_identity(self):
        table = build_joint(tiny_config())
        for race in table.race_set:
            direct = table.phi(race, 1)
            theta = float(table.theta()[table.race_set.index(race)])
            via_bayes = table.positive_rate(race) * theta / table.nu()
            assert direct == pytest.approx(via_bayes, abs=1e-12)

    def test_zero_mass_event(self):
        table = build_joint(tiny_config())
        with pytest.raises(ZeroMassEventError):
            table.race_given(geo="NOWHERE")

    def test_naive_enumeration_agreement(self):
        cfg = tiny_config()
        table = build_joint(cfg)
        mass = table.mass
        # recompute a conditional by explicit loops over cells
        g, s, y = "G1", "S2", 1
        gi, si = 1, 2
        weights = []
        for r in range(2):
            total = 0.0
            for rr in range(2):
                for gg in range(3):
                    for ss in range(4):
                        for yy in (0, 1):
                            if gg == gi and ss == si and yy == y and rr == r:
                                total += mass[rr, gg, ss, yy]
            weights.append(total)
        expected = np.array(weights) / sum(weights)
        got = table.race_given(geo=g, surname=s, context=y).probs
        assert np.abs(got - expected).max() < 1e-12
        # marginals the same way
        assert table.nu() == pytest.approx(float(mass[..., 1].sum()), abs=1e-15)
        assert np.allclose(table.theta(), mass.sum(axis=(1, 2, 3)), atol=1e-15)


class TestOracleProxies:
    def test_mean_consistent_proxy_exact(self):
        for seed in (601, 602):
            table = build_joint(random_dgp(seed, n_geos=10, n_surnames=20))
            pop = table.to_weighted_dataset()
            proxy = mean_consistent_proxy(table)
            for race in table.race_set:
                for y in (0, 1):
                    assert consistency_violation(proxy, pop, race, y) < 1e-12
                assert abs(
                    bayes_estimate(proxy, pop, race) - table.positive_rate(race)
                ) < 1e-12

    def test_uniform_mixture_violation_is_linear(self):
        table = build_joint(random_dgp(603, n_geos=8, n_surnames=12))
        pop = table.to_weighted_dataset()
        proxy = mean_consistent_proxy(table)
        k = len(table.race_set)
        lam = 0.25
        mixed = MixtureProxy(proxy, (np.full(k, 1 / k), np.full(k, 1 / k)), (lam, lam))
        for race in table.race_set:
            expected = lam * abs(table.phi(race, 1) - 1 / k)
            assert consistency_violation(mixed, pop, race, 1) == pytest.approx(
                expected, abs=1e-12
            )

    def test_conditional_proxy_rows_are_exact(self):
        table = build_joint(tiny_config())
        proxy = conditional_proxy(table)
        ds = sample_population(table, 200, seed=5)
        probs = proxy.evaluate(ds, 1)
        for i in range(0, 200, 37):
            exact = table.race_given(geo=ds.geos[i], surname=ds.surnames[i], context=1)
            assert np.allclose(probs[i], exact.probs)

    def test_calibrated_proxy_ignores_context(self):
        table = build_joint(tiny_config())
        proxy = calibrated_proxy(table)
        ds = sample_population(table, 100, seed=6)
        assert np.array_equal(proxy.evaluate(ds, 0), proxy.evaluate(ds, 1))

    def test_assumption2_satisfying_world(self):
        # with no mixing, surname is independent of (geo, outcome) given race
        table = build_joint(tiny_config())
        mass = table.mass
        cond = mass / mass.sum(axis=2, keepdims=True)  # Pr[s | r, g, y]
        base = cond[:, 0, :, 0]
        for g in range(3):
            for y in (0, 1):
                assert np.allclose(cond[:, g, :, y], base, atol=1e-12)

    def test_bias_oracle_sign_control(self):
        # the generator can produce either bias sign on demand
        up = build_joint(random_dgp(604, outcome="correlated", n_geos=8, n_surnames=12))
        oracles = [weighted_bias_oracle(up, r) for r in up.race_set]
        assert max(oracles) > 0 and min(oracles) < 0


class TestCensusTables:
    def test_exact_tables_reproduce_conditionals(self):
        cfg = tiny_config()
        table = build_joint(cfg)
        st = table.census_surname_table()
        gt = table.census_geo_table()
        for i, s in enumerate(cfg.surnames):
            assert np.allclose(
                st.prob_given_race(s), cfg.surname_given_race[:, i], atol=1e-12
            )
        for g in cfg.geo_ids:
            assert np.allclose(
                gt.race_given_geo(g), table.race_given(geo=g).probs, atol=1e-12
            )

    def test_rounded_tables_are_integers(self):
        table = build_joint(tiny_config())
        st, gt = table.rounded_census_tables(scale=10_000)
        for s in st.surnames:
            counts = st.counts(s)
            assert np.array_equal(counts, np.rint(counts))


class TestJointCsv:
    def test_round_trip(self, tmp_path):
        table = build_joint(random_dgp(605, n_geos=5, n_surnames=8))
        path = tmp_path / "joint_table.csv"
        table.save_csv(path)
        again = JointTable.load_csv(path)
        assert again.race_set == table.race_set
        assert again.geo_ids == table.geo_ids
        assert np.abs(again.mass - table.mass).max() < 1e-15

    def test_header_checked(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y,z\n", encoding="utf-8")
        with pytest.raises(InvalidConfigError):
            JointTable.load_csv(path)


class TestFactories:
    def test_random_dgp_structure(self):
        cfg = random_dgp(7)
        assert len(cfg.geo_ids) == 50
        assert len(cfg.surnames) == 200
        assert abs(cfg.theta.sum() - 1) < 1e-9
        table = build_joint(cfg)
        assert abs(table.mass.sum() - 1) < 1e-12

    def test_smooth_dgp_stays_interior(self):
        table = build_joint(smooth_dgp(9))
        probs = calibrated_proxy(table).evaluate(
            sample_population(table, 500, seed=1), 0
        )
        assert probs.min() > 0.05
