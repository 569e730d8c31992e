import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from oracles import kupiec_scalar
from qnbm.config import percentile_grid
from qnbm.errors import ParameterError, ShapeError
from qnbm.evaluation import (
    KUPIEC_CRITICAL_5PCT,
    calibration_curve,
    crps_pinball,
    daily_loss,
    dm_matrix,
    dm_test,
    evaluate,
    kupiec_test,
    mae,
    picp,
)
from qnbm.forecast import QuantileForecast

LEVELS = np.array(percentile_grid())


def constant_forecast(y, offset, levels=LEVELS):
    return QuantileForecast(np.repeat((y + offset)[..., None], len(levels), axis=2), levels)


class TestScores:
    def test_perfect_forecast(self):
        y = np.random.default_rng(0).normal(size=(5, 24))
        fc = constant_forecast(y, 0.0)
        assert crps_pinball(y, fc) == 0.0
        assert picp(y, fc, 0.9) == 100.0
        assert mae(y, fc) == 0.0

    def test_crps_closed_form_shifted(self):
        y = np.zeros((3, 24))
        assert crps_pinball(y, constant_forecast(y, 1.0)) == pytest.approx(np.mean(1 - LEVELS), abs=1e-12)
        assert crps_pinball(y, constant_forecast(y, -2.0)) == pytest.approx(2 * np.mean(LEVELS), abs=1e-12)

    def test_crps_warns_on_coarse_grid(self):
        y = np.zeros((1, 2))
        with pytest.warns(UserWarning, match="3 levels"):
            crps_pinball(y, constant_forecast(y, 0.0, np.array([0.1, 0.5, 0.9])))

    def test_picp_counts_inclusive_bounds(self):
        levels = np.array([0.05, 0.5, 0.95])
        vals = np.tile([-1.0, 0.0, 1.0], (1, 4, 1))
        fc = QuantileForecast(vals, levels)
        y = np.array([[-1.0, 1.0, 1.5, 0.2]])
        assert picp(y, fc, 0.9) == 75.0

    def test_picp_missing_levels(self):
        y = np.zeros((1, 1))
        with pytest.raises(ParameterError, match="0.01"):
            picp(y, constant_forecast(y, 0, np.array([0.5])), 0.98)

    def test_mae_needs_median(self):
        y = np.zeros((1, 1))
        with pytest.raises(ParameterError):
            mae(y, constant_forecast(y, 0, np.array([0.25])))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            crps_pinball(np.zeros((2, 24)), constant_forecast(np.zeros((3, 24)), 0))

    def test_calibration_of_true_gaussian(self):
        y = np.random.default_rng(1).normal(size=(2000, 24))
        fc = QuantileForecast(np.broadcast_to(norm.ppf(LEVELS), (2000, 24, 99)).copy(), LEVELS)
        assert np.max(np.abs(calibration_curve(y, fc) - LEVELS)) < 0.03

    def test_daily_loss_norms(self):
        y = np.zeros((2, 24))
        fc = constant_forecast(y, 1.0)
        l1 = daily_loss(y, fc)
        np.testing.assert_allclose(l1, 24 * np.sum(1 - LEVELS))
        l2 = daily_loss(y, fc, norm_ord=2)
        np.testing.assert_allclose(l2, math.sqrt(24 * np.sum((1 - LEVELS) ** 2)))


class TestKupiec:
    def test_all_hits_at_half(self):
        lr, reject = kupiec_test(0, 100, 0.5)
        assert lr == pytest.approx(-200 * math.log(0.5), abs=1e-9)
        assert lr == pytest.approx(138.63, abs=5e-3) and reject

    def test_exact_rate_is_zero(self):
        assert kupiec_test(10, 100, 0.1) == (0.0, False)

    def test_critical_value(self):
        from scipy.stats import chi2

        assert KUPIEC_CRITICAL_5PCT == pytest.approx(chi2.ppf(0.95, 1), abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 500), st.data(), st.floats(0.01, 0.99))
    def test_matches_high_precision(self, n, data, p):
        x = data.draw(st.integers(0, n))
        lr, _ = kupiec_test(x, n, p)
        assert lr == pytest.approx(kupiec_scalar(x, n, p, mpmath), rel=1e-8, abs=1e-8)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 300), st.data(), st.floats(0.01, 0.99))
    def test_relabel_invariance(self, n, data, p):
        x = data.draw(st.integers(0, n))
        assert kupiec_test(x, n, p)[0] == pytest.approx(kupiec_test(n - x, n, 1 - p)[0], rel=1e-9, abs=1e-9)

    @pytest.mark.parametrize("args", [(5, 4, 0.1), (-1, 4, 0.1), (1, 4, 0.0), (1, 0, 0.5)])
    def test_invalid(self, args):
        with pytest.raises(ParameterError):
            kupiec_test(*args)


class TestDieboldMariano:
    def test_antisymmetry(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=100), rng.normal(size=100) + 0.2
        ab, ba = dm_test(a, b), dm_test(b, a)
        assert ab.statistic == pytest.approx(-ba.statistic)
        assert ab.p_value == pytest.approx(ba.p_value)
        assert ab.direction == "a" and ba.direction == "b"

    def test_statistic_formula(self):
        a = np.array([1.0, 2.0, 4.0, 3.0] * 10)
        b = np.zeros(40)
        d = a - b
        expect = d.mean() / (d.std(ddof=1) / math.sqrt(40))
        res = dm_test(a, b, "greater")
        assert res.statistic == pytest.approx(expect, rel=1e-12)
        assert res.p_value == pytest.approx(norm.sf(expect), rel=1e-9)

    def test_identical_losses(self):
        a = np.arange(40.0)
        assert dm_test(a, a) == dm_test(a, a.copy())
        res = dm_test(a, a)
        assert (res.statistic, res.p_value, res.direction) == (0.0, 1.0, "equal")

    def test_constant_nonzero_difference(self):
        a = np.arange(40.0)
        res = dm_test(a + 1, a, "greater")
        assert res.statistic == math.inf and res.p_value == 0.0

    def test_short_series_warns(self):
        with pytest.warns(UserWarning):
            dm_test(np.arange(5.0), np.arange(5.0)[::-1])

    def test_unknown_alternative(self):
        with pytest.raises(ParameterError):
            dm_test(np.arange(40.0), np.zeros(40), "sideways")

    def test_size_under_null(self):
        rng = np.random.default_rng(3)
        rej = np.mean([dm_test(rng.normal(size=365), rng.normal(size=365)).p_value < 0.05 for _ in range(400)])
        assert 0.02 <= rej <= 0.08

    def test_matrix(self):
        rng = np.random.default_rng(0)
        losses = {"good": rng.normal(size=100), "bad": rng.normal(size=100) + 1.0}
        m = dm_matrix(losses)
        assert np.isnan(m.loc["good", "good"])
        assert m.loc["bad", "good"] < 0.01 and m.loc["good", "bad"] > 0.99


class TestEvaluate:
    def test_report_fields(self):
        rng = np.random.default_rng(0)
        y = rng.normal(size=(200, 24))
        fc = QuantileForecast(np.broadcast_to(norm.ppf(LEVELS), (200, 24, 99)).copy(), LEVELS)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            rep = evaluate(y, fc, truth=fc)
        assert set(rep.picp) == {"50", "90", "98"}
        assert abs(rep.picp["90"] - 90) < 2
        assert 0 <= rep.kupiec["90"]["hours_passed"] <= 24
        assert rep.crps_lower_bound == rep.crps
        flat = rep.to_flat()
        assert flat["picp_90"] == rep.picp["90"] and "kupiec_98_hours_passed" in flat
        assert '"crps"' in rep.to_json()
