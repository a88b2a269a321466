import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from validity_audit.errors import TailFitError
from validity_audit.graph import LEFT, SampleGraph, kcore_decompose
from validity_audit.scaling import pareto_weights
from validity_audit.tail import (EmptyGroupWarning, PowerLawFit, coverage_table,
                                 empirical_coverage, fit_pareto_tail, survival, validity_coverage)


class TestFit:
    def test_mle_closed_form(self):
        d = np.array([2.0, 4.0, 8.0, 8.0, 16.0] * 4)
        fit = fit_pareto_tail(d, x_min=2.0)
        assert fit.alpha == pytest.approx(len(d) / np.sum(np.log(d / 2.0)))

    def test_recovers_alpha(self):
        rng = np.random.default_rng(3)
        d = pareto_weights(2.38, 8.0, 200_000, rng)
        fit = fit_pareto_tail(d, x_min=8.0)
        # MLE standard error is alpha / sqrt(n)
        assert abs(fit.alpha - 2.38) < 5 * 2.38 / np.sqrt(len(d))

    def test_ks_selects_threshold(self):
        rng = np.random.default_rng(4)
        body = rng.uniform(1, 20, 3000)
        tail = pareto_weights(2.0, 20.0, 3000, rng)
        fit = fit_pareto_tail(np.concatenate([body, tail]))
        assert 15 <= fit.x_min <= 30
        assert abs(fit.alpha - 2.0) < 0.25

    def test_degenerate_inputs(self):
        with pytest.raises(TailFitError):
            fit_pareto_tail([5] * 50)
        with pytest.raises(TailFitError):
            fit_pareto_tail([1, 2, 3])
        with pytest.raises(TailFitError):
            fit_pareto_tail(np.arange(1, 100), x_min=95)

    def test_invalid_fit_object(self):
        with pytest.raises(ValueError):
            PowerLawFit(alpha=-1.0, x_min=2.0, n=10)


class TestCoverage:
    fit = PowerLawFit(alpha=2.38, x_min=8.0, n=1000)

    def test_known_values(self):
        assert validity_coverage(self.fit, 8).fraction == 1.0
        assert validity_coverage(self.fit, 10).fraction == pytest.approx(0.8 ** 2.38, rel=1e-12)
        assert validity_coverage(self.fit, 10).expected_nodes == pytest.approx(1000 * 0.8 ** 2.38)

    def test_below_threshold_is_one(self):
        assert survival(self.fit, 1) == 1.0
        assert np.all(survival(self.fit, np.arange(1, 9)) == 1.0)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.5, 5.0), st.floats(1.0, 50.0), st.integers(1, 1000), st.integers(1, 1000))
    def test_monotone_in_rank(self, alpha, x_min, k1, k2):
        fit = PowerLawFit(alpha, x_min, 100)
        lo, hi = sorted((k1, k2))
        assert validity_coverage(fit, hi).fraction <= validity_coverage(fit, lo).fraction
        assert 0 <= validity_coverage(fit, hi).fraction <= 1

    def test_rank_must_be_positive(self):
        with pytest.raises(ValueError):
            validity_coverage(self.fit, 0)


class TestEmpirical:
    def graph(self):
        # left 0 has degree 3, left 1 degree 1; the 2-core is {0, a, b} minus leaves
        return SampleGraph.from_interactions([0, 0, 0, 1, 2, 2], ["a", "b", "c", "a", "a", "b"],
                                             left_meta={0: {"g": "x"}, 1: {"g": "y"}, 2: {"g": "x"}})

    def test_core_vs_degree(self):
        g = self.graph()
        cd = kcore_decompose(g)
        assert empirical_coverage(cd, LEFT, 2) == pytest.approx(2 / 3)
        assert empirical_coverage(cd, LEFT, 3, criterion="degree") == pytest.approx(1 / 3)
        assert empirical_coverage(cd, LEFT, 3) == 0.0

    def test_group_and_empty_group(self):
        g = self.graph()
        cd = kcore_decompose(g)
        assert empirical_coverage(cd, LEFT, 2, g.group_members(LEFT, "g", "x")) == 1.0
        with pytest.warns(EmptyGroupWarning):
            assert empirical_coverage(cd, LEFT, 2, np.array([], dtype=int)) == 0.0

    def test_rank_one_full_coverage(self):
        g = self.graph()
        rows = coverage_table(None, kcore_decompose(g), LEFT, [1])
        assert rows[0]["empirical_core"] == 1.0 and np.isnan(rows[0]["analytic"])


class TestMovieLensAudit:
    def test_occupation_coverage(self, movielens):
        cd = kcore_decompose(movielens)
        tech = movielens.group_members(LEFT, "occupation", "technician")
        home = movielens.group_members(LEFT, "occupation", "homemaker")
        assert len(tech) == 27 and len(home) == 7
        assert empirical_coverage(cd, LEFT, 60, tech) == pytest.approx(18 / 27)
        assert empirical_coverage(cd, LEFT, 60, home) == pytest.approx(1 / 7)
