import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import EXAMPLE_SHARES
from supercompliers.data import ADMISSIBLE_GROUPS, Group
from supercompliers.dgp import (
    DiscreteLaw,
    ObservedDistribution,
    StratificationDGP,
    Stratum,
    check_inequalities,
    induce,
    load_dgp,
    rationalize,
    sample,
    save_dgp,
    simulate_variance_gap,
    true_values,
    variance_gap_example,
    violation_dgp,
)
from supercompliers.exceptions import ConfigError, InequalityViolation, WeakFirstStageError
from supercompliers.identification import characteristics_wald


def conforming_dgp(rng, n_support=3):
    shares = dict(zip(ADMISSIBLE_GROUPS, rng.dirichlet(np.ones(len(ADMISSIBLE_GROUPS)))))
    laws = {g: DiscreteLaw(np.arange(n_support, dtype=float), rng.dirichlet(np.ones(n_support)))
            for g in ADMISSIBLE_GROUPS}
    return StratificationDGP(shares, float(rng.uniform(0.1, 0.9)), laws, ("x",))


class TestValidation:
    def test_shares_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            StratificationDGP({Group.cc: 0.5, Group.nn: 0.4}, 0.5)

    def test_negative_share(self):
        with pytest.raises(ValueError):
            StratificationDGP({Group.cc: 1.2, Group.nn: -0.2}, 0.5)

    @pytest.mark.parametrize("tau", [0.0, 1.0, 1.5])
    def test_tau(self, tau):
        with pytest.raises(ValueError, match="tau"):
            StratificationDGP({Group.cc: 1.0}, tau)

    def test_law(self):
        with pytest.raises(ValueError, match="probability vector"):
            DiscreteLaw([0.0, 1.0], [0.5, 0.6])

    def test_tolerance_is_1e12(self):
        StratificationDGP({Group.cc: 0.5 + 5e-13, Group.nn: 0.5}, 0.5)
        with pytest.raises(ValueError):
            StratificationDGP({Group.cc: 0.5 + 1e-10, Group.nn: 0.5}, 0.5)


class TestSample:
    def test_never_takers(self):
        t = sample(StratificationDGP({Group.nn: 1.0}, 0.5), 1000, seed=1)
        assert t.d.sum() == 0 and t.y.sum() == 0

    def test_supercompliers_only(self):
        t = sample(StratificationDGP({Group.cc: 1.0}, 0.5), 1000, seed=2)
        np.testing.assert_array_equal(t.y, t.z)
        np.testing.assert_array_equal(t.d, t.z)

    def test_potential_outcome_rules(self, example_dgp):
        t, groups = sample(example_dgp, 5000, seed=3, return_groups=True)
        for g in set(groups):
            m = groups == g
            d_expected = np.where(t.z[m] == 1, g.treatment(1), g.treatment(0))
            np.testing.assert_array_equal(t.d[m], d_expected)
            y_expected = np.where(t.d[m] == 1, g.outcome(1), g.outcome(0))
            np.testing.assert_array_equal(t.y[m], y_expected)

    def test_deterministic_and_parallel_invariant(self, example_dgp):
        a = sample(example_dgp, 200_000, seed=7)
        b = sample(example_dgp, 200_000, seed=7, workers=4)
        np.testing.assert_array_equal(a.z, b.z)
        np.testing.assert_array_equal(a.x, b.x)
        c = sample(example_dgp, 200_000, seed=8)
        assert not np.array_equal(a.z, c.z)

    def test_prefix_stable_across_n(self, example_dgp):
        a = sample(example_dgp, 70_000, seed=9)
        b = sample(example_dgp, 140_000, seed=9)
        np.testing.assert_array_equal(a.y, b.y[:70_000])

    def test_law_of_large_numbers(self, example_observed):
        dgp = rationalize(example_observed)
        t = sample(dgp, 1_000_000, seed=10)
        for z, target in ((0, example_observed.p0), (1, example_observed.p1)):
            m = t.z == z
            for y in (0, 1):
                for d in (0, 1):
                    emp = np.mean((t.y[m] == y) & (t.d[m] == d))
                    assert abs(emp - target[y, d]) <= 0.005

    def test_n_must_be_positive(self, example_dgp):
        with pytest.raises(ValueError):
            sample(example_dgp, 0)

    def test_csv_export(self, example_dgp, tmp_path):
        from supercompliers.data import load_observations
        t = sample(example_dgp, 500, seed=11)
        t.to_csv(tmp_path / "s.csv")
        back = load_observations(tmp_path / "s.csv", {"covariates": ["x", "female"]})
        np.testing.assert_array_equal(back.x, t.x)


class TestTrueValues:
    def test_shares_example(self):
        shares = {Group.cc: 0.2, Group.ca: 0.1, Group.cn: 0.05, Group.aa: 0.3, Group.nn: 0.35}
        tv = true_values(StratificationDGP(shares, 0.5))
        assert tv.first_stage == pytest.approx(0.35, abs=1e-15)
        assert tv.reduced_form == pytest.approx(0.20, abs=1e-15)
        assert tv.late == pytest.approx(0.20 / 0.35, rel=1e-14)

    def test_no_compliers(self):
        tv = true_values(StratificationDGP({Group.aa: 0.4, Group.nn: 0.6}, 0.5))
        assert tv.first_stage == 0.0
        assert tv.late is None

    def test_point_mass(self):
        laws = {Group.cc: DiscreteLaw.point(2.0)}
        tv = true_values(StratificationDGP({Group.cc: 0.5, Group.nn: 0.5}, 0.5, laws, ("x",)))
        assert tv.mean_x_by_target["supercomplier"]["x"] == 2.0
        assert tv.wald_limit["supercomplier"]["x"] == pytest.approx(2.0)

    def test_example_group_means(self, example_dgp):
        tv = true_values(example_dgp)
        xs = np.arange(6)
        from conftest import X_PROBS
        assert tv.mean_x_by_target["supercomplier"]["x"] == pytest.approx(xs @ X_PROBS[Group.cc])
        comp = sum(EXAMPLE_SHARES[g] * (xs @ X_PROBS[g]) for g in (Group.ca, Group.cn, Group.cc)) / 0.35
        assert tv.mean_x_by_target["complier"]["x"] == pytest.approx(comp)
        for target in ("complier", "supercomplier", "ca", "cn"):
            assert tv.wald_limit[target]["x"] == pytest.approx(tv.mean_x_by_target[target]["x"], rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_conforming_identities(self, seed):
        dgp = conforming_dgp(np.random.default_rng(seed))
        tv = true_values(dgp)
        assert tv.reduced_form == pytest.approx(tv.share_cc, abs=1e-14)
        np.testing.assert_allclose(tv.inequality_lhs, (tv.share_cn, tv.share_ca, tv.share_cc), atol=1e-14)
        if tv.late is not None:
            assert tv.reduced_form == pytest.approx(tv.late * tv.first_stage, abs=1e-14)

    def test_cc_cdf_quantile_and_cell_probabilities(self, example_dgp):
        tv = true_values(example_dgp)
        np.testing.assert_allclose(tv.cc_cdf("x", np.arange(6.0)), [0.05, 0.15, 0.30, 0.65, 0.85, 1.0])
        assert tv.cc_cdf("x", -1.0) == 0.0
        assert tv.cc_quantile("x", 0.5) == 3.0
        assert tv.cc_quantile("x", 0.30) == 2.0
        probs = tv.cc_probability_given("female")
        from conftest import FEMALE_P
        fem = sum(EXAMPLE_SHARES[g] * FEMALE_P[g] for g in EXAMPLE_SHARES)
        assert probs[1.0] == pytest.approx(0.2 * 0.7 / fem)

    def test_non_binary_outcomes(self):
        # cc outcomes depend on x: effect 1 at x=0, effect 3 at x=1
        cc_law = DiscreteLaw([0.0, 1.0], [0.5, 0.5], outcomes=[[0.0, 1.0], [2.0, 5.0]])
        laws = {Group.cc: cc_law, Group.nn: DiscreteLaw([0.0, 1.0], [0.3, 0.7])}
        dgp = StratificationDGP({Group.cc: 0.4, Group.cn: 0.1, Group.nn: 0.5}, 0.5, laws, ("x",))
        assert not dgp.y_binary
        tv = true_values(dgp)
        # reduced form = p_cc * E[Y1 - Y0 | cc]; cn has no effect
        assert tv.reduced_form == pytest.approx(0.4 * (0.5 * 1 + 0.5 * 3))
        te_mean = (0.5 * 0 * 1 + 0.5 * 1 * 3) / (0.5 * 1 + 0.5 * 3)
        assert tv.te_weighted_mean["x"] == pytest.approx(te_mean)
        assert tv.wald_limit["supercomplier"]["x"] == pytest.approx(te_mean)
        t = sample(dgp, 200_000, seed=12)
        est = characteristics_wald(t, "x")
        assert est.label == "TE-weighted supercomplier mean"
        assert abs(est.value - te_mean) <= 4 * est.se


class TestRationalize:
    def test_example_shares(self, example_observed):
        dgp = rationalize(example_observed)
        expected = {g: 0.0 for g in Group}
        expected.update(EXAMPLE_SHARES)
        for g in Group:
            assert dgp.shares[g] == pytest.approx(expected[g], abs=1e-15), g
        assert induce(dgp).max_abs_difference(example_observed) <= 1e-12
        assert dgp.conforming

    def test_negative_reduced_form(self):
        obs = ObservedDistribution.from_cells({(1, 0): 0.5, (0, 0): 0.5}, {(1, 0): 0.4, (0, 0): 0.6})
        with pytest.raises(InequalityViolation, match="cc_share") as err:
            rationalize(obs)
        assert err.value.inequality == "cc_share"

    def test_identical_arms_never_takers(self):
        arm = {(1, 0): 0.3, (0, 0): 0.7}
        dgp = rationalize(ObservedDistribution.from_cells(arm, arm))
        assert dgp.shares[Group.cc] == dgp.shares[Group.ca] == dgp.shares[Group.cn] == 0.0
        assert all(dgp.shares[g] == 0.0 for g in Group if g.treatment_type != "n")

    def test_invalid_distribution(self):
        with pytest.raises(ValueError):
            ObservedDistribution(np.full((2, 2), 0.3), np.full((2, 2), 0.25))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_round_trips(self, seed):
        dgp = conforming_dgp(np.random.default_rng(seed))
        obs = induce(dgp)
        back = rationalize(obs, dgp.tau)
        assert induce(back).max_abs_difference(obs) <= 1e-12
        # the identified shares come back exactly
        for g in (Group.ca, Group.cn, Group.cc):
            assert back.shares[g] == pytest.approx(dgp.shares[g], abs=1e-12)

    def test_check_inequalities_names_all(self):
        obs = ObservedDistribution.from_cells(
            {(0, 1): 0.3, (1, 0): 0.1, (1, 1): 0.4, (0, 0): 0.2},
            {(0, 1): 0.1, (1, 0): 0.3, (1, 1): 0.1, (0, 0): 0.5})
        assert check_inequalities(obs) == ["cn_share", "ca_share", "cc_share"]


class TestSerialization:
    def test_yaml_round_trip(self, example_dgp, tmp_path):
        save_dgp(example_dgp, tmp_path / "d.yaml")
        back = load_dgp(tmp_path / "d.yaml")
        assert back.shares == example_dgp.shares
        assert back.covariate_names == example_dgp.covariate_names
        t1, t2 = sample(example_dgp, 1000, 1), sample(back, 1000, 1)
        np.testing.assert_array_equal(t1.x, t2.x)

    def test_stratified_round_trip(self, tmp_path):
        dgp = StratificationDGP.stratified([
            Stratum("a", StratificationDGP({Group.cc: 0.3, Group.nn: 0.7}, 0.3), 0.4),
            Stratum("b", StratificationDGP({Group.cc: 0.5, Group.aa: 0.5}, 0.6), 0.6),
        ])
        save_dgp(dgp, tmp_path / "s.yaml")
        back = load_dgp(tmp_path / "s.yaml")
        assert [s.label for s in back.strata] == ["a", "b"]
        assert back.tau == pytest.approx(0.4 * 0.3 + 0.6 * 0.6)

    def test_bad_file(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("tau: 0.5\ngroups:\n  cc: {share: 0.4}\n")
        with pytest.raises(ConfigError, match="invalid DGP"):
            load_dgp(p)


class TestStratifiedDGP:
    def test_pooled_fields_and_sample(self):
        s1 = StratificationDGP({Group.cc: 0.2, Group.nn: 0.8}, 0.3,
                               {Group.cc: DiscreteLaw.point(1.0)}, ("x",))
        s2 = StratificationDGP({Group.cc: 0.6, Group.aa: 0.4}, 0.6,
                               {Group.cc: DiscreteLaw.point(3.0)}, ("x",))
        dgp = StratificationDGP.stratified([("one", s1, 0.5), ("two", s2, 0.5)])
        assert dgp.shares[Group.cc] == pytest.approx(0.4)
        t = sample(dgp, 20_000, seed=3)
        assert set(np.unique(t.stratum)) == {"one", "two"}
        assert t.z[t.stratum == "one"].mean() == pytest.approx(0.3, abs=0.02)
        tv = true_values(dgp)
        # omega weights: 0.5 * 0.2 * 0.21 and 0.5 * 0.6 * 0.24
        w1, w2 = 0.5 * 0.2 * 0.21, 0.5 * 0.6 * 0.24
        assert tv.fe_limit["x"] == pytest.approx((w1 * 1 + w2 * 3) / (w1 + w2))


class TestVarianceGap:
    @pytest.mark.parametrize("mu,expected", [(0.25, 0.0), (0.0, -0.0625), (1.0, 0.1875)])
    def test_values(self, mu, expected):
        assert variance_gap_example(mu) == pytest.approx(expected, abs=1e-15)

    def test_domain(self):
        with pytest.raises(ValueError):
            variance_gap_example(1.5)

    @pytest.mark.parametrize("mu", [0.0, 1.0])
    def test_simulated_endpoints(self, mu):
        res = simulate_variance_gap(mu, 1_000_000, seed=5)
        assert abs(res.estimate - res.analytic) <= 3 * max(res.mcse, 1e-12)


class TestViolationDGP:
    def test_no_violation(self):
        dgp = violation_dgp(0.0, 0.3)
        assert dgp.conforming
        assert true_values(dgp).reduced_form == pytest.approx(0.3)

    def test_reduced_form(self):
        tv = true_values(violation_dgp(0.1, 0.3))
        assert tv.reduced_form == pytest.approx(0.2)
        assert tv.share_cc == 0.3

    def test_equal_shares_zero_denominator(self):
        laws = {Group.cc: DiscreteLaw.point(1.0), Group.cf: DiscreteLaw.point(0.0)}
        dgp = violation_dgp(0.2, 0.2, covariate_laws=laws, covariate_names=("x",))
        assert true_values(dgp).wald_limit["supercomplier"]["x"] is None
        t = sample(dgp, 2000, seed=1)
        rf = t.y[t.z == 1].mean() - t.y[t.z == 0].mean()
        if rf == 0:
            with pytest.raises(WeakFirstStageError):
                characteristics_wald(t, "x")

    def test_other_shares(self):
        dgp = violation_dgp(0.1, 0.3, {Group.aa: 0.6})
        assert dgp.shares[Group.aa] == 0.6
        with pytest.raises(ValueError):
            violation_dgp(0.1, 0.3, {Group.cc: 0.6})
