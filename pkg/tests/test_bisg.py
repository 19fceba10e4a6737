import numpy as np
import pytest

from fairproxy import (
    BisgProxy,
    GeoTable,
    RaceSet,
    SurnameTable,
    build_joint,
    l1_distance,
    random_dgp,
)
from fairproxy.errors import UnknownGeoError

RS2 = RaceSet(("a", "b"))


def small_model():
    surnames = SurnameTable(
        {"LOW": [0.2, 0.1], "ONLYA": [0.2, 0.0]}, RS2, race_totals=(1.0, 1.0)
    )
    geo = GeoTable({"G1": [50, 50], "G2": [0, 100], "G3": [30, 70]}, RS2)
    return BisgProxy(surnames, geo)


class TestPredict:
    def test_forced_arithmetic(self):
        # Pr[s|R]=(0.2,0.1) times Pr[R|g]=(0.5,0.5), renormalized
        pred = small_model().predict_one("LOW", "G1")
        assert np.allclose(pred.probs, [2 / 3, 1 / 3])

    def test_unknown_surname_falls_back_to_geo(self):
        pred = small_model().predict_one("NOBODY", "G3")
        assert np.allclose(pred.probs, [0.3, 0.7])

    def test_empty_surname_falls_back_to_geo(self):
        model = small_model()
        for g in model.geo_table.geo_ids:
            assert np.allclose(
                model.predict_one("", g).probs, model.predict_geo_only(g).probs
            )

    def test_unknown_geo(self):
        with pytest.raises(UnknownGeoError):
            small_model().predict_one("LOW", "NOWHERE")

    def test_zero_product_falls_back_and_counts(self):
        model = small_model()
        # ONLYA has mass only on race a; G2 has mass only on race b
        pred = model.predict_one("ONLYA", "G2")
        assert np.allclose(pred.probs, [0, 1])
        assert model.zero_product_fallbacks == 1


class TestGeoOnly:
    def test_forced_division(self):
        assert np.allclose(small_model().predict_geo_only("G1").probs, [0.5, 0.5])

    def test_single_support(self):
        geo = GeoTable({"G": [0, 100, 0]}, RaceSet(("a", "b", "c")))
        surnames = SurnameTable({}, RaceSet(("a", "b", "c")), race_totals=(1, 1, 1))
        model = BisgProxy(surnames, geo)
        assert np.allclose(model.predict_geo_only("G").probs, [0, 1, 0])

    def test_unknown_geo(self):
        with pytest.raises(UnknownGeoError):
            small_model().predict_geo_only("NOWHERE")


class TestBatchEvaluate:
    def test_matches_single_path(self):
        cfg = random_dgp(21, n_geos=8, n_surnames=15)
        table = build_joint(cfg)
        model = BisgProxy(table.census_surname_table(), table.census_geo_table())
        from fairproxy import sample_population

        ds = sample_population(table, 500, seed=3)
        batch = model.evaluate(ds, 0)
        for i in [0, 17, 211, 499]:
            single = model.evaluate_one(ds.record(i), 0)
            assert np.allclose(batch[i], single.probs)

    def test_context_ignored(self):
        cfg = random_dgp(21, n_geos=8, n_surnames=15)
        table = build_joint(cfg)
        model = BisgProxy(table.census_surname_table(), table.census_geo_table())
        from fairproxy import sample_population

        ds = sample_population(table, 200, seed=4)
        assert np.array_equal(model.evaluate(ds, 0), model.evaluate(ds, 1))


class TestOracleEquivalence:
    def test_matches_exact_conditional_under_independence(self):
        # with surname independent of geography given race, the two-factor
        # formula reproduces the exact conditional on every positive cell
        for seed in (1, 2, 3):
            cfg = random_dgp(seed, n_geos=10, n_surnames=25)
            table = build_joint(cfg)
            model = BisgProxy(table.census_surname_table(), table.census_geo_table())
            worst = _max_gap(model, table)
            assert worst < 1e-10

    def test_violation_breaks_equivalence(self):
        # regression guard: the oracle comparison must detect dependence
        cfg = random_dgp(5, n_geos=10, n_surnames=25, assumption1_violation=0.5)
        table = build_joint(cfg)
        model = BisgProxy(table.census_surname_table(), table.census_geo_table())
        assert _max_gap(model, table) > 0.01


def _max_gap(model, table):
    worst = 0.0
    for g in table.geo_ids:
        for s in table.surnames:
            cell_mass = table.mass[:, table._geo_index[g], table._surname_index[s], :].sum()
            if cell_mass <= 0:
                continue
            exact = table.race_given(geo=g, surname=s)
            worst = max(worst, l1_distance(model.predict_one(s, g), exact))
    return worst
