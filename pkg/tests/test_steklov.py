"""Tests for moving time averages and the additive Gronwall bound."""

import math

import numpy as np
import pytest

from tvflow import (
    TimeSeries,
    Weight,
    approximate_limit,
    backward_average,
    centered_average,
    discrete_gronwall,
    l1_convergence_rate,
    loglog_slope,
)
from tvflow.steklov import l1_distance


def _identity(t_end=1.0, n=11):
    t = np.linspace(0.0, t_end, n)
    return TimeSeries(t, t.copy())


class TestTimeSeries:
    def test_validation(self):
        with pytest.raises(ValueError, match="matching"):
            TimeSeries(np.array([0.0, 1.0]), np.array([1.0]))
        with pytest.raises(ValueError, match="at least 2"):
            TimeSeries(np.array([0.0]), np.array([1.0]))
        with pytest.raises(ValueError, match="strictly increasing"):
            TimeSeries(np.array([0.0, 0.0]), np.array([1.0, 2.0]))
        with pytest.raises(ValueError, match="finite"):
            TimeSeries(np.array([0.0, 1.0]), np.array([1.0, np.inf]))

    def test_value_interpolates_and_zero_extends(self):
        ts = TimeSeries(np.array([1.0, 2.0]), np.array([3.0, 5.0]))
        assert ts.value(1.5) == pytest.approx(4.0)
        assert ts.value(0.5) == 0.0
        assert ts.value(2.5) == 0.0
        np.testing.assert_allclose(ts.value(np.array([1.0, 2.0])), [3.0, 5.0])

    def test_integral_exact_trapezoid(self):
        ts = TimeSeries(np.array([0.0, 1.0, 3.0]), np.array([0.0, 2.0, 0.0]))
        # triangle of height 2 over width 3: area 3
        assert ts.integral(0.0, 3.0) == pytest.approx(3.0, abs=1e-15)
        # partial interval crossing a breakpoint
        assert ts.integral(0.5, 2.0) == pytest.approx(
            0.5 * (0.5 * (1.0 + 2.0)) + 1.0 * 0.5 * (2.0 + 1.0), abs=1e-14
        )

    def test_integral_clips_to_support(self):
        ts = TimeSeries(np.array([1.0, 2.0]), np.array([4.0, 4.0]))
        assert ts.integral(0.0, 3.0) == pytest.approx(4.0)
        assert ts.integral(-5.0, 0.5) == 0.0

    def test_integral_bad_interval(self):
        ts = _identity()
        with pytest.raises(ValueError):
            ts.integral(0.5, 0.2)
        with pytest.raises(ValueError):
            ts.integral(0.0, math.inf)

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        t = np.sort(rng.uniform(0, 10, 20))
        t += np.arange(20) * 1e-6  # guarantee strict increase
        v = rng.normal(size=20)
        ts = TimeSeries(t, v)
        p = tmp_path / "series.csv"
        ts.to_csv(p)
        back = TimeSeries.from_csv(p)
        np.testing.assert_array_equal(back.t, ts.t)
        np.testing.assert_array_equal(back.v, ts.v)

    def test_from_csv_rejects_bad_files(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("time,val\n0,1\n")
        with pytest.raises(ValueError, match="header"):
            TimeSeries.from_csv(p)
        p.write_text("t,value\n0,1,2\n")
        with pytest.raises(ValueError, match="two columns"):
            TimeSeries.from_csv(p)


class TestWeight:
    def test_one_is_one(self):
        w = Weight.one()
        assert w(0.3) == 1.0
        np.testing.assert_array_equal(w(np.array([0.0, 5.0])), [1.0, 1.0])

    def test_bump_support_and_peak(self):
        w = Weight.smooth_bump(0.2, 0.8)
        assert w(0.2) == 0.0
        assert w(0.8) == 0.0
        assert w(0.1) == 0.0
        assert w(0.5) == pytest.approx(1.0)  # normalized peak at the center
        assert 0.0 < w(0.3) < 1.0

    def test_bump_validation(self):
        with pytest.raises(ValueError):
            Weight.smooth_bump(0.5, 0.5)
        with pytest.raises(ValueError):
            Weight.smooth_bump(-0.1, 0.5)
        with pytest.raises(ValueError, match="unknown weight kind"):
            Weight("gaussian")


class TestBackwardAverage:
    def test_constant_series_unchanged_inside(self):
        ts = TimeSeries(np.array([0.0, 1.0]), np.array([2.0, 2.0]))
        avg = backward_average(ts, 0.25)
        for t in avg.t[avg.t >= 0.25]:
            assert avg.value(t) == pytest.approx(2.0, abs=1e-14)

    def test_linear_series_lags_by_half_radius(self):
        ts = _identity()
        avg = backward_average(ts, 0.04)
        # full-window points: mean of s over [t - eps, t] is t - eps/2
        assert avg.value(0.3) == pytest.approx(0.28, abs=1e-14)
        assert avg.value(0.5) == pytest.approx(0.48, abs=1e-14)

    def test_zero_extension_before_start(self):
        ts = _identity()
        eps = 0.2
        avg = backward_average(ts, eps)
        # window [t - eps, t] pokes below 0: integral is t^2/2
        t = 0.1
        assert avg.value(t) == pytest.approx(t * t / 2.0 / eps, abs=1e-14)

    def test_matches_brute_force_quadrature_at_nodes(self):
        rng = np.random.default_rng(1)
        t = np.linspace(0.0, 2.0, 17)
        ts = TimeSeries(t, rng.uniform(-1, 1, 17))
        eps = 0.13
        avg = backward_average(ts, eps)
        for probe in avg.t[4:-4:3]:
            fine = np.linspace(probe - eps, probe, 40001)
            brute = np.trapezoid(ts.value(fine), fine) / eps
            assert avg.value(probe) == pytest.approx(brute, abs=1e-6)

    def test_dominated_by_average_of_absolute_value(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            m = int(rng.integers(4, 30))
            t = np.sort(rng.uniform(0, 5, m))
            t += np.arange(m) * 1e-9
            ts = TimeSeries(t, rng.normal(size=m))
            abs_ts = TimeSeries(ts.t, np.abs(ts.v))
            eps = float(rng.uniform(0.05, 0.5)) * (ts.t_end - ts.t_start)
            eps = min(eps, 0.9 * ts.t_end) if ts.t_end > 0 else 0.01
            if not (0.0 < eps < ts.t_end):
                continue
            a = backward_average(ts, eps)
            b = backward_average(abs_ts, eps)
            assert np.all(np.abs(a.v) <= b.v + 1e-12)

    def test_bump_weight_must_fit(self):
        ts = _identity()
        with pytest.raises(ValueError, match="inside"):
            backward_average(ts, 0.1, Weight.smooth_bump(0.5, 1.5))

    def test_radius_validation(self):
        ts = _identity()
        with pytest.raises(ValueError):
            backward_average(ts, 0.0)
        with pytest.raises(ValueError):
            backward_average(ts, 2.0)


class TestCenteredAverage:
    def test_exact_on_linear_series(self):
        ts = _identity()
        for eps in (0.1, 0.05, 0.025, 0.0125):
            avg = centered_average(ts, eps)
            for probe in (0.2, 0.5, 0.8):
                assert avg.value(probe) == pytest.approx(probe, abs=1e-14)

    def test_smooths_a_kink(self):
        # hat(t) = min(t, 1 - t): averaging the two unit slopes over the
        # window drops the kink value by exactly eps/2
        ts = TimeSeries(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.5, 0.0]))
        avg = centered_average(ts, 0.1)
        assert avg.value(0.5) == pytest.approx(0.5 - 0.1 / 2.0, abs=1e-14)

    def test_radius_validation(self):
        ts = _identity()
        with pytest.raises(ValueError):
            centered_average(ts, 0.6)  # needs eps < t_end / 2


class TestL1Distance:
    def test_exact_with_sign_crossing(self):
        flat = TimeSeries(np.array([0.0, 1.0]), np.array([0.0, 0.0]))
        ramp = TimeSeries(np.array([0.0, 1.0]), np.array([-0.5, 0.5]))
        assert l1_distance(flat, ramp, 0.0, 1.0) == pytest.approx(0.25, abs=1e-15)

    def test_symmetry_and_zero(self):
        a = _identity()
        b = TimeSeries(a.t, a.v * 2.0)
        assert l1_distance(a, b, 0.0, 1.0) == pytest.approx(
            l1_distance(b, a, 0.0, 1.0), abs=1e-15
        )
        assert l1_distance(a, a, 0.0, 1.0) == 0.0

    def test_interval_must_be_covered(self):
        a = _identity()
        b = TimeSeries(np.array([0.5, 1.0]), np.array([0.0, 0.0]))
        with pytest.raises(ValueError, match="sampled range"):
            l1_distance(a, b, 0.0, 1.0)
        with pytest.raises(ValueError):
            l1_distance(a, a, 0.7, 0.7)


class TestConvergenceRate:
    def test_first_order_on_piecewise_linear_decay(self):
        # sup-norm decay shape: 1 - 5t until extinction, then zero
        ts = TimeSeries(np.array([0.0, 0.2, 0.3]), np.array([1.0, 0.0, 0.0]))
        pairs = l1_convergence_rate(ts, [0.1, 0.05, 0.025, 0.0125])
        assert [p[0] for p in pairs] == [0.1, 0.05, 0.025, 0.0125]
        assert all(e2 < e1 for (_, e1), (_, e2) in zip(pairs, pairs[1:]))
        slope = loglog_slope(pairs)
        assert 0.8 <= slope <= 1.2

    def test_radii_validation(self):
        ts = _identity()
        with pytest.raises(ValueError, match="strictly decreasing"):
            l1_convergence_rate(ts, [0.05, 0.1])
        with pytest.raises(ValueError, match="positive"):
            l1_convergence_rate(ts, [0.1, 0.0])

    def test_loglog_slope_recovers_power(self):
        pairs = [(e, 3.0 * e**1.5) for e in (0.1, 0.05, 0.025)]
        assert loglog_slope(pairs) == pytest.approx(1.5, abs=1e-12)
        with pytest.raises(ValueError):
            loglog_slope([(0.1, 1.0)])


class TestApproximateLimit:
    def test_exact_at_linear_points(self):
        ts = _identity()
        assert approximate_limit(ts, 0.5) == pytest.approx(0.5, abs=1e-14)

    def test_converges_at_a_kink(self):
        ts = TimeSeries(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.5, 0.0]))
        err = abs(approximate_limit(ts, 0.5, eps_list=(0.02, 0.01)) - 0.5)
        assert err <= 0.01

    def test_radius_validation(self):
        ts = _identity()
        with pytest.raises(ValueError):
            approximate_limit(ts, 0.5, eps_list=(0.9,))


class TestDiscreteGronwall:
    def test_small_examples(self):
        assert discrete_gronwall(2.0, [0.5]) == [2.0, 2.5]
        assert discrete_gronwall(1.0, [0.1, 0.2]) == pytest.approx([1.0, 1.1, 1.3])
        assert discrete_gronwall(3.0, []) == [3.0]

    def test_validation(self):
        with pytest.raises(ValueError):
            discrete_gronwall(-1.0, [0.1])
        with pytest.raises(ValueError):
            discrete_gronwall(1.0, [-0.1])
        with pytest.raises(ValueError):
            discrete_gronwall(math.nan, [0.1])

    def test_dominates_additive_recursions(self):
        # The bound sequence dominates any norms obeying the one-step
        # growth rule sigma_k <= sigma_{k-1} + g_k (which the solver map
        # guarantees: it is nonexpansive and fixes zero).
        rng = np.random.default_rng(42)
        for _ in range(10):
            m = int(rng.integers(1, 30))
            sigma0 = float(rng.uniform(0, 3))
            gains = rng.uniform(0, 0.5, m)
            bounds = discrete_gronwall(sigma0, gains)
            sigma = [sigma0]
            for g in gains:
                sigma.append(max(sigma[-1] + g * rng.uniform(0, 1) - rng.uniform(0, 0.2), 0.0))
            for s, b in zip(sigma, bounds):
                assert s <= b + 1e-12
