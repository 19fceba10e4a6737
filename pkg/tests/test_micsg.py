import numpy as np
import pytest

from fairproxy import (
    BisgProxy,
    MicsgProxy,
    RaceSet,
    SupplementalDataset,
    build_joint,
    conditional_proxy,
    sample_population,
    smooth_dgp,
)
from fairproxy.domain import AttributedRecord, ContextualProxy, RaceDistribution
from fairproxy.errors import InconsistentCovariateArityError, UnlabeledDatasetError


class FixedProxy(ContextualProxy):
    """Context-free stub returning one fixed distribution for every record."""

    def __init__(self, race_set, probs):
        self._race_set = race_set
        self._probs = np.asarray(probs, float)
        self.calls = 0

    @property
    def race_set(self):
        return self._race_set

    def evaluate_one(self, record, context):
        self.calls += 1
        return RaceDistribution(self._probs)

    def evaluate(self, dataset, context):
        self.calls += 1
        return np.tile(self._probs, (len(dataset), 1))


RS3 = RaceSet(("r1", "r2", "r3"))


def mini_train(n=30, p=1):
    rng = np.random.default_rng(0)
    return SupplementalDataset(
        ids=[str(i) for i in range(n)],
        surnames=["S"] * n,
        geos=["G"] * n,
        contexts=rng.integers(0, 2, size=n),
        covariates=rng.normal(size=(n, p)),
        races=[RS3[int(i)] for i in rng.integers(0, 3, size=n)],
        race_set=RS3,
    )


class TestAssembleFeatures:
    def _fitted(self, p=1):
        proxy = MicsgProxy(FixedProxy(RS3, [0.2, 0.3, 0.5]), max_iters=5)
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            proxy.fit(mini_train(p=p))
        # identity transform so raw rows are visible
        proxy.cov_means_ = np.zeros(p)
        proxy.cov_stds_ = np.ones(p)
        return proxy

    def test_concatenation_order(self):
        proxy = self._fitted()
        rec = AttributedRecord(id="1", surname="S", geo="G", context=1, covariates=(1.0,))
        row = proxy.assemble_features(rec)
        assert np.allclose(row, [0.2, 0.3, 0.5, 1.0, 1.0])

    def test_override_changes_last_coordinate_only(self):
        proxy = self._fitted()
        rec = AttributedRecord(id="1", surname="S", geo="G", context=1, covariates=(1.0,))
        base = proxy.assemble_features(rec)
        flipped = proxy.assemble_features(rec, context_override=0)
        assert flipped[-1] == 0.0
        assert np.allclose(base[:-1], flipped[:-1])

    def test_empty_covariates_width(self):
        proxy = self._fitted(p=0)
        rec = AttributedRecord(id="1", surname="S", geo="G", context=0)
        assert proxy.assemble_features(rec).shape == (4,)

    def test_arity_enforced(self):
        proxy = self._fitted(p=1)
        rec = AttributedRecord(id="1", surname="S", geo="G", context=0, covariates=(1.0, 2.0))
        with pytest.raises(InconsistentCovariateArityError):
            proxy.assemble_features(rec)


class TestFit:
    def test_requires_labels(self):
        ds = SupplementalDataset(
            ids=["1"], surnames=["S"], geos=["G"], contexts=[0], race_set=RS3
        )
        with pytest.raises(UnlabeledDatasetError):
            MicsgProxy(FixedProxy(RS3, [0.2, 0.3, 0.5])).fit(ds)

    def test_query_access_only(self):
        base = FixedProxy(RS3, [0.2, 0.3, 0.5])
        proxy = MicsgProxy(base, max_iters=50)
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            proxy.fit(mini_train())
        before = base.calls
        assert before > 0
        proxy.evaluate(mini_train(), 1)
        assert base.calls == before + 1
        # the base proxy object itself is untouched
        assert np.allclose(base._probs, [0.2, 0.3, 0.5])


def improvement_setup(seed, outcome, n_train=None, n_test=4_000):
    """Mild population; n_train=None trains on the exact weighted population."""
    cfg = smooth_dgp(seed, outcome=outcome)
    table = build_joint(cfg)
    base = BisgProxy(table.census_surname_table(), table.census_geo_table())
    if n_train is None:
        train = table.to_weighted_dataset()
    else:
        train = sample_population(table, n_train, seed=seed + 1)
    test = sample_population(table, n_test, seed=seed + 2)
    proxy = MicsgProxy(base, l2_lambda=1e-4).fit(train)
    oracle = conditional_proxy(table)
    return base, proxy, oracle, test


def heldout_l1_to(proxy, reference, test):
    gaps = []
    for y in (0, 1):
        mask = test.contexts == y
        sub = test.subset(mask)
        gaps.append(
            np.abs(proxy.evaluate(sub, y) - reference.evaluate(sub, y)).sum(axis=1)
        )
    return float(np.concatenate(gaps).mean())


class TestImprovementDirection:
    @pytest.mark.filterwarnings("ignore::fairproxy.errors.ConvergenceWarning")
    def test_strong_context_signal_beats_base(self):
        base, proxy, oracle, test = improvement_setup(61, "correlated")
        l1_micsg = heldout_l1_to(proxy, oracle, test)
        l1_base = heldout_l1_to(base, oracle, test)
        assert l1_micsg < l1_base

    def test_context_independent_ties_base(self):
        base, proxy, oracle, test = improvement_setup(67, "independent")
        l1_micsg = heldout_l1_to(proxy, oracle, test)
        l1_base = heldout_l1_to(base, oracle, test)
        assert abs(l1_micsg - l1_base) <= 0.02

    def test_calibrated_base_recovered(self):
        # no covariates, calibrated base, finite training sample: the learner
        # should act nearly as the identity on the base probabilities
        base, proxy, oracle, test = improvement_setup(71, "independent", n_train=8_000)
        assert heldout_l1_to(proxy, base, test) <= 0.05

    @pytest.mark.filterwarnings("ignore::fairproxy.errors.ConvergenceWarning")
    def test_prediction_shift_sign_matches_oracle(self):
        base, proxy, oracle, test = improvement_setup(73, "correlated")
        shift_model = (proxy.evaluate(test, 1) - proxy.evaluate(test, 0)).mean(axis=0)
        shift_oracle = (oracle.evaluate(test, 1) - oracle.evaluate(test, 0)).mean(axis=0)
        for k in range(3):
            if abs(shift_oracle[k]) > 0.01:
                assert np.sign(shift_model[k]) == np.sign(shift_oracle[k])


class TestPredict:
    @pytest.mark.filterwarnings("ignore::fairproxy.errors.ConvergenceWarning")
    def test_deterministic(self):
        base, proxy, oracle, test = improvement_setup(79, "independent", n_train=2_000, n_test=100)
        a = proxy.evaluate(test, 1)
        b = proxy.evaluate(test, 1)
        assert np.array_equal(a, b)

    @pytest.mark.filterwarnings("ignore::fairproxy.errors.ConvergenceWarning")
    def test_valid_distributions(self):
        base, proxy, oracle, test = improvement_setup(83, "correlated", n_train=2_000, n_test=300)
        for y in (0, 1):
            probs = proxy.evaluate(test, y)
            assert np.allclose(probs.sum(axis=1), 1.0)
            assert np.all(probs >= 0)

    @pytest.mark.filterwarnings("ignore::fairproxy.errors.ConvergenceWarning")
    def test_save_load_round_trip(self, tmp_path):
        base, proxy, oracle, test = improvement_setup(89, "independent", n_train=2_000, n_test=100)
        path = tmp_path / "micsg.json"
        proxy.save_json(path, base_spec="bisg")
        again = MicsgProxy.load_json(path, base)
        assert MicsgProxy.read_base_spec(path) == "bisg"
        assert np.allclose(proxy.evaluate(test, 0), again.evaluate(test, 0))
