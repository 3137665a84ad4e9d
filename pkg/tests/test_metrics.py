import numpy as np
import pytest
from hypothesis import given, strategies as st

from evplan.metrics import (
    curve_metrics,
    fairness,
    plan_selection_distribution,
    relative_reduction,
    system_discomfort,
)

unit_lists = st.lists(st.floats(0, 1), min_size=1, max_size=200)


class TestDiscomfortAndFairness:
    def test_zeros(self):
        assert system_discomfort([0, 0, 0]) == 0

    def test_mean(self):
        assert system_discomfort([0.2, 0.4]) == pytest.approx(0.3)

    def test_identical_is_perfectly_fair(self):
        assert fairness([0.3] * 5) == 1.0

    def test_two_extremes(self):
        assert fairness([0, 1]) == 0.5

    @pytest.mark.parametrize("fn", [system_discomfort, fairness])
    def test_empty(self, fn):
        with pytest.raises(ValueError):
            fn([])

    @given(unit_lists)
    def test_identity(self, values):
        assert fairness(values) + np.std(values) == pytest.approx(1.0, abs=1e-12)

    @given(unit_lists)
    def test_system_discomfort_within_range(self, values):
        assert min(values) - 1e-15 <= system_discomfort(values) <= max(values) + 1e-15

    @given(unit_lists)
    def test_fairness_bounded(self, values):
        assert 0.5 - 1e-12 <= fairness(values) <= 1.0


class TestCurveMetrics:
    def test_constant_curve(self):
        sigma, cost, peak = curve_metrics(np.full(10, 3.0), np.ones(10))
        assert sigma == 0 and peak == 3.0

    def test_hourly_cost(self):
        assert curve_metrics([1, 3], [2, 1], step_hours=1.0)[1] == 5

    def test_minute_cost(self):
        assert curve_metrics(np.full(60, 6.0), np.full(60, 0.2))[1] == pytest.approx(1.2)

    def test_population_std(self):
        assert curve_metrics([0, 2], [1, 1])[0] == 1.0

    def test_mismatch(self):
        with pytest.raises(ValueError):
            curve_metrics([1, 2], [1, 2, 3])


class TestRelativeReduction:
    def test_same(self):
        assert relative_reduction(4.0, 4.0) == 0

    def test_to_zero(self):
        assert relative_reduction(0.0, 4.0) == 1.0

    def test_zero_control(self):
        with pytest.raises(ValueError):
            relative_reduction(1.0, 0.0)


class TestSelectionDistribution:
    def test_all_first(self):
        np.testing.assert_array_equal(plan_selection_distribution([[1] * 10], 4), [1, 0, 0, 0])

    def test_uniform_large_sample(self):
        rng = np.random.default_rng(0)
        dist = plan_selection_distribution([rng.integers(1, 5, 4000) for _ in range(5)], 4)
        np.testing.assert_allclose(dist, 0.25, atol=0.02)

    def test_average_over_repetitions(self):
        dist = plan_selection_distribution([[1, 1], [2, 4]], 4)
        np.testing.assert_allclose(dist, [0.5, 0.25, 0, 0.25])

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            plan_selection_distribution([[0, 1]], 4)

    @given(st.lists(st.lists(st.integers(1, 4), min_size=1), min_size=1, max_size=10))
    def test_sums_to_one(self, reps):
        assert abs(plan_selection_distribution(reps, 4).sum() - 1) <= 1e-12
