"""Tests for the extinction and source-truncation studies."""

import numpy as np
import pytest

from tvflow import (
    Grid,
    ProxConfig,
    ScalarField,
    SourceTerm,
    TruncatedPower,
    extinction_study,
    mollification_study,
)


def _indicator_line(n=64, lo=0.3, hi=0.7, height=1.0):
    g = Grid.line(n, 1.0)
    c = g.cell_centers(0)
    return ScalarField(g, np.where((c >= lo) & (c < hi), height, 0.0))


class TestExtinctionStudy:
    def test_indicator_extinguishes_near_prediction(self):
        u0 = _indicator_line()
        study = extinction_study(u0, SourceTerm.zero(u0.grid), 0.3, 0.005)
        # mass/perimeter: height 1 over width 0.4 dies at t = 0.4/2 = 0.2
        assert study.extinction_time == pytest.approx(0.2, abs=0.01)
        assert study.threshold == pytest.approx(1.0 / 64.0)
        assert len(study.times) == len(study.sup_norms) == 61
        assert study.times[0] == 0.0
        assert study.sup_norms[0] == 1.0

    def test_sup_norms_are_per_step_not_per_snapshot(self):
        u0 = _indicator_line(n=32)
        study = extinction_study(
            u0, SourceTerm.zero(u0.grid), 0.1, 0.01, snapshot_every=1_000_000
        )
        assert len(study.times) == 11
        assert not study.trajectory.has_full_snapshots

    def test_no_extinction_reports_none(self):
        u0 = _indicator_line(n=32)
        study = extinction_study(u0, SourceTerm.zero(u0.grid), 0.05, 0.01)
        assert study.extinction_time is None
        assert study.sup_norms[-1] > study.threshold

    def test_already_extinct_at_start(self):
        g = Grid.line(16, 1.0)
        u0 = ScalarField(g, np.full(16, 1e-6))
        study = extinction_study(u0, SourceTerm.zero(g), 0.02, 0.01)
        assert study.extinction_time == 0.0

    def test_custom_threshold(self):
        u0 = _indicator_line(n=64)
        study = extinction_study(
            u0, SourceTerm.zero(u0.grid), 0.3, 0.005, threshold=0.5
        )
        # height 1 - 5t crosses 0.5 at t = 0.1
        assert study.extinction_time == pytest.approx(0.1, abs=0.01)
        with pytest.raises(ValueError, match="nonnegative"):
            extinction_study(u0, SourceTerm.zero(u0.grid), 0.1, 0.01, threshold=-1.0)

    def test_history_rows_align(self):
        u0 = _indicator_line(n=32)
        study = extinction_study(u0, SourceTerm.zero(u0.grid), 0.05, 0.01)
        rows = study.history_rows()
        assert rows[0] == (0.0, 1.0)
        assert len(rows) == 6


def _power_source(grid, exponent=-0.75):
    g = ScalarField(grid, np.full(grid.n, 2.0))
    return SourceTerm.separable(g, TruncatedPower(scale=1.0, exponent=exponent))


class TestMollificationStudy:
    def test_distances_monotone_and_bounded(self):
        g = Grid.line(24, 1.0)
        u0 = ScalarField.zeros(g)
        f = _power_source(g)
        study = mollification_study(
            u0, f, 0.2, 0.02, ProxConfig(gap_tol=1e-11), levels=(2, 4, 8, 16)
        )
        assert study.levels == (2.0, 4.0, 8.0, 16.0)
        assert len(study.rows) == 6
        assert study.monotone
        assert study.all_within_bounds
        for row in study.rows:
            assert row.max_l2_distance <= row.bound + 1e-12 * max(1.0, row.bound)

    def test_higher_caps_agree_more(self):
        # the worst disagreement among pairs with minimum level m shrinks
        # as m grows (the caps differ only on a shorter and shorter window)
        g = Grid.line(24, 1.0)
        u0 = ScalarField.zeros(g)
        f = _power_source(g)
        study = mollification_study(
            u0, f, 0.2, 0.02, ProxConfig(gap_tol=1e-11), levels=(2, 4, 8, 16)
        )
        worst = [
            max(r.max_l2_distance for r in study.rows if r.level_low == m)
            for m in (2.0, 4.0, 8.0)
        ]
        assert worst[2] <= worst[1] + 1e-12
        assert worst[1] <= worst[0] + 1e-12
        with pytest.raises(KeyError):
            study.distance(3, 5)
        assert study.distance(16, 2) == study.distance(2, 16)  # order-free lookup

    def test_existing_cap_respected(self):
        g = Grid.line(16, 1.0)
        u0 = ScalarField.zeros(g)
        prof = TruncatedPower(scale=1.0, exponent=-0.5, cap=6.0)
        f = SourceTerm.separable(ScalarField(g, np.ones(16)), prof)
        study = mollification_study(u0, f, 0.1, 0.02, levels=(4, 8))
        # above the existing cap of 6 the runs are identical
        assert study.rows[0].max_l2_distance >= 0.0

    def test_requires_power_law_source(self):
        g = Grid.line(8, 1.0)
        u0 = ScalarField.zeros(g)
        with pytest.raises(ValueError, match="separable"):
            mollification_study(u0, SourceTerm.zero(g), 0.1, 0.05)
        const = SourceTerm.constant(ScalarField(g, np.ones(8)))
        with pytest.raises(ValueError, match="separable"):
            mollification_study(u0, const, 0.1, 0.05)

    def test_level_validation(self):
        g = Grid.line(8, 1.0)
        u0 = ScalarField.zeros(g)
        f = _power_source(g)
        with pytest.raises(ValueError, match="at least two"):
            mollification_study(u0, f, 0.1, 0.05, levels=(4,))
        with pytest.raises(ValueError, match="strictly increasing"):
            mollification_study(u0, f, 0.1, 0.05, levels=(8, 4))
        with pytest.raises(ValueError, match="positive"):
            mollification_study(u0, f, 0.1, 0.05, levels=(0.0, 4))
