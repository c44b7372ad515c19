import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from outcomewide.data_model import BINARY, CATEGORICAL, CONTINUOUS, Column, Dataset, write_table
from outcomewide.errors import ValidationError
from outcomewide.glm import FitResult
from outcomewide.imputation import (
    HighMissingnessWarning,
    complete_case_filter,
    compare_mi_cc,
    impute_chained,
    load_imputed_dir,
    pool_rubin,
)
from outcomewide.spec import AnalysisSpec

from dgp import make_cohort, standard_spec_dict


def fit(estimate, se, scale="mean_difference", family="linear", term="a"):
    z = 1.959963984540054
    return FitResult(estimate, se, (estimate - z * se, estimate + z * se),
                     0.05, scale, family, 100, True, 3, term)


class TestPoolRubin:
    def test_identical_pair(self):
        pooled = pool_rubin([fit(1.0, 0.2), fit(1.0, 0.2)])
        assert pooled.estimate == 1.0
        assert abs(pooled.total_var - 0.04) < 1e-12
        assert pooled.between_var == 0.0

    def test_hand_arithmetic(self):
        pooled = pool_rubin([fit(0.8, 0.2), fit(1.2, 0.2)])
        assert pooled.estimate == pytest.approx(1.0, abs=1e-12)
        assert pooled.within_var == pytest.approx(0.04, abs=1e-12)
        assert pooled.between_var == pytest.approx(0.08, abs=1e-12)
        assert pooled.total_var == pytest.approx(0.16, abs=1e-12)
        assert pooled.se == pytest.approx(0.4, abs=1e-12)

    def test_m_copies_exact(self):
        f = fit(0.37, 0.11)
        pooled = pool_rubin([f] * 7)
        assert pooled.estimate == f.estimate
        assert pooled.se == pytest.approx(f.se, abs=1e-15)

    def test_single_result_errors(self):
        with pytest.raises(ValidationError):
            pool_rubin([fit(1.0, 0.1)])

    def test_mixed_scales_error(self):
        with pytest.raises(ValidationError):
            pool_rubin([fit(1.0, 0.1), fit(1.0, 0.1, scale="log_risk", family="poisson_robust")])

    def test_degenerate_zero_variance(self):
        pooled = pool_rubin([fit(0.0, 0.0), fit(0.0, 0.0)])
        assert pooled.se == 0.0 and pooled.p_value == 1.0
        assert pooled.ci == (0.0, 0.0)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(-3, 3), st.floats(0.01, 2.0)),
                    min_size=2, max_size=12))
    def test_order_invariance(self, pairs):
        fits = [fit(e, s) for e, s in pairs]
        a = pool_rubin(fits)
        b = pool_rubin(list(reversed(fits)))
        assert a.estimate == pytest.approx(b.estimate, rel=1e-12)
        assert a.total_var == pytest.approx(b.total_var, rel=1e-12)


def small_missing_dataset(n=200, seed=0, frac=0.05):
    rng = np.random.default_rng(seed)
    x = rng.normal(2.0, 1.5, size=n)
    b = (rng.random(n) < 0.4).astype(float)
    g = np.array(rng.choice(["u", "v", "w"], size=n), dtype=object)
    mask_x = rng.random(n) < frac
    xv = x.copy()
    xv[mask_x] = np.nan
    return Dataset.from_columns([
        Column("x", CONTINUOUS, xv, mask_x),
        Column("b", BINARY, b, np.zeros(n, dtype=bool)),
        Column("g", CATEGORICAL, g, np.zeros(n, dtype=bool)),
    ])


class TestImputeChained:
    def test_no_missing_returns_copies(self):
        ds = make_cohort(100, 1)
        out = impute_chained(ds, 4, 3, 0)
        assert out.m == 4
        for d in out.datasets:
            assert d.equals(ds)

    def test_m_zero_errors(self):
        with pytest.raises(ValidationError):
            impute_chained(make_cohort(50, 2), 0, 3, 0)

    def test_too_few_observed_errors(self):
        n = 30
        vals = np.arange(n, dtype=float)
        mask = np.ones(n, dtype=bool)
        mask[:10] = False
        vals[mask] = np.nan
        ds = Dataset.from_columns([
            Column("x", CONTINUOUS, vals, mask),
            Column("y", CONTINUOUS, np.arange(n, dtype=float), np.zeros(n, dtype=bool)),
        ])
        with pytest.raises(ValidationError, match="observed"):
            impute_chained(ds, 2, 2, 0)

    def test_high_missingness_warns(self):
        ds = small_missing_dataset(n=300, frac=0.2)
        with pytest.warns(HighMissingnessWarning):
            impute_chained(ds, 2, 2, 0)

    def test_completes_all_cells_and_preserves_observed(self):
        ds = small_missing_dataset()
        out = impute_chained(ds, 3, 4, 11)
        for d in out.datasets:
            assert all(c.n_missing == 0 for c in d.columns.values())
            obs = ~ds.column("x").missing_mask
            assert np.array_equal(d.column("x").values[obs], ds.column("x").values[obs])

    def test_mcar_mean_recovery(self):
        ds = small_missing_dataset(n=2000, seed=5, frac=0.05)
        out = impute_chained(ds, 20, 5, 3)
        obs_mean = ds.column("x").observed().mean()
        means = [d.column("x").values.mean() for d in out.datasets]
        pooled_mean = np.mean(means)
        mc_se = np.std(means, ddof=1) / np.sqrt(len(means)) + 1e-9
        assert abs(pooled_mean - obs_mean) < max(3 * mc_se, 0.05)

    def test_deterministic_given_seed(self):
        ds = small_missing_dataset()
        a = impute_chained(ds, 2, 3, 21)
        b = impute_chained(ds, 2, 3, 21)
        for da, db in zip(a.datasets, b.datasets):
            assert da.equals(db)

    def test_seed_stability_of_estimates(self):
        # different seeds change imputed cells but not conclusions
        ds = small_missing_dataset(n=1500, seed=9, frac=0.08)
        out1 = impute_chained(ds, 10, 4, 100)
        out2 = impute_chained(ds, 10, 4, 200)
        m1 = np.mean([d.column("x").values.mean() for d in out1.datasets])
        m2 = np.mean([d.column("x").values.mean() for d in out2.datasets])
        s1 = np.std([d.column("x").values.mean() for d in out1.datasets], ddof=1)
        assert not out1.datasets[0].equals(out2.datasets[0])
        assert abs(m1 - m2) < max(3 * s1, 0.05)

    def test_binary_and_categorical_stay_valid(self):
        n = 400
        rng = np.random.default_rng(17)
        b = (rng.random(n) < 0.3).astype(float)
        g = np.array(rng.choice(["u", "v"], size=n), dtype=object)
        mb = rng.random(n) < 0.1
        mg = rng.random(n) < 0.1
        bv = b.copy()
        bv[mb] = np.nan
        gv = g.copy()
        gv[mg] = ""
        ds = Dataset.from_columns([
            Column("c", CONTINUOUS, rng.normal(size=n), np.zeros(n, dtype=bool)),
            Column("b", BINARY, bv, mb),
            Column("g", CATEGORICAL, gv, mg, levels=("u", "v")),
        ])
        out = impute_chained(ds, 3, 3, 7)
        for d in out.datasets:
            assert set(np.unique(d.column("b").values)) <= {0.0, 1.0}
            assert set(d.column("g").values) <= {"u", "v"}


class TestCompleteCaseFilter:
    def test_identity_with_no_missing(self):
        ds = make_cohort(150, 3)
        spec = AnalysisSpec.from_dict(standard_spec_dict())
        out = complete_case_filter(ds, spec, "y1")
        assert out.n_rows == ds.n_rows

    def test_drops_rows_missing_exposure_columns(self):
        ds = make_cohort(200, 4, missing_frac=0.1)
        spec = AnalysisSpec.from_dict(standard_spec_dict())
        out = complete_case_filter(ds, spec, "y1")
        for name in ("a", "c1", "c2", "y1"):
            assert out.column(name).n_missing == 0
        assert out.n_rows < ds.n_rows

    def test_per_outcome_n_varies(self):
        ds = make_cohort(500, 5, missing_frac=0.08)
        spec = AnalysisSpec.from_dict(standard_spec_dict())
        ns = {o: complete_case_filter(ds, spec, o).n_rows for o in ("y1", "y2", "b1")}
        assert len(set(ns.values())) > 1


class TestLoadImputedDir(object):
    def test_round_trip(self, tmp_path):
        ds = make_cohort(80, 6)
        for i in range(3):
            write_table(ds, tmp_path / f"imp_{i}.csv")
        schema = {c.name: c.kind for c in ds.columns.values()}
        out = load_imputed_dir(tmp_path, schema)
        assert out.m == 3
        assert out.datasets[0].equals(ds)
        assert out.provenance["method"] == "external"


class TestCompareMiCc:
    class _Entry:
        def __init__(self, name, fit_):
            self.name = name
            self.fit = fit_

    class _Result:
        def __init__(self, entries):
            self.outcomes = entries

    def test_identical_runs_no_flags(self):
        a = self._Result([self._Entry("y1", fit(0.2, 0.02))])
        out = compare_mi_cc(a, a)
        assert out.rows[0].abs_difference == 0.0
        assert not out.flagged_outcomes and out.recommendation is None

    def test_small_difference_not_flagged(self):
        mi = self._Result([self._Entry("y1", fit(0.20, 0.02))])
        cc = self._Result([self._Entry("y1", fit(0.21, 0.02))])
        out = compare_mi_cc(mi, cc)
        assert out.rows[0].abs_difference == pytest.approx(0.01)
        assert not out.rows[0].flagged

    def test_disjoint_cis_flagged_with_recommendation(self):
        mi = self._Result([self._Entry("y1", fit(0.20, 0.01)),
                           self._Entry("y2", fit(0.0, 0.01))])
        cc = self._Result([self._Entry("y1", fit(0.80, 0.01)),
                           self._Entry("y2", fit(0.0, 0.01))])
        out = compare_mi_cc(mi, cc)
        assert out.flagged_outcomes == ["y1"]
        assert "y1" in out.recommendation

    def test_outcome_set_mismatch_errors(self):
        mi = self._Result([self._Entry("y1", fit(0.2, 0.02))])
        cc = self._Result([self._Entry("y2", fit(0.2, 0.02))])
        with pytest.raises(ValidationError):
            compare_mi_cc(mi, cc)
