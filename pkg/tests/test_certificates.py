"""Tests for the runtime certificate checks."""

import numpy as np
import pytest

from tvflow import (
    CertificateReport,
    DualField,
    Grid,
    ProxConfig,
    ScalarField,
    SourceTerm,
    TvMode,
    check_apriori,
    check_boundary_sign,
    check_contraction,
    check_equation,
    check_flatness,
    check_green,
    check_main_estimate,
    l2_norm,
    rof_prox,
    run,
    total_variation,
)


def _field(grid, values):
    return ScalarField(grid, np.asarray(values, dtype=float))


def _dual_1d(grid, values):
    return DualField(grid, (np.asarray(values, dtype=float),))


def _random_dual(grid, rng):
    comps = tuple(
        rng.uniform(-1.0, 1.0, grid.face_shape(ax)) for ax in range(grid.dim)
    )
    return DualField(grid, comps)


class TestCertificateReport:
    def test_pass_flag_must_match(self):
        CertificateReport("ok", 0.5, 1.0, True, None)
        CertificateReport("bad", 2.0, 1.0, False, 7)
        with pytest.raises(ValueError, match="inconsistent"):
            CertificateReport("lie", 2.0, 1.0, True, None)
        with pytest.raises(ValueError, match="inconsistent"):
            CertificateReport("lie", 0.5, 1.0, False, None)

    def test_csv_round_shape(self):
        rep = CertificateReport("x", 0.5, 1.0, True, 3)
        assert CertificateReport.csv_header() == "name,value,tolerance,pass,location"
        assert rep.csv_row() == "x,0.5,1,true,3"
        rep2 = CertificateReport("y", 2.0, 1.0, False, None)
        assert rep2.csv_row() == "y,2,1,false,"


class TestEquation:
    def test_exact_from_solver_output(self):
        rng = np.random.default_rng(0)
        g = Grid.line(32, 1.0)
        u_prev = ScalarField(g, rng.uniform(-2, 2, 32))
        f_step = ScalarField(g, rng.uniform(-1, 1, 32))
        tau = 0.15
        y = ScalarField(g, u_prev.values + tau * f_step.values)
        res = rof_prox(y, tau, ProxConfig(gap_tol=1e-10))
        rep = check_equation(u_prev, res.u, res.z, f_step, tau, gap_tol=1e-10)
        assert rep.passed
        assert rep.value <= 1e-13

    def test_exact_in_2d(self):
        rng = np.random.default_rng(1)
        g = Grid.box(9, 7, 1.0, 1.0)
        u_prev = ScalarField(g, rng.uniform(-1, 1, (9, 7)))
        f_step = ScalarField.zeros(g)
        tau = 0.05
        res = rof_prox(u_prev, tau, ProxConfig(gap_tol=1e-9))
        rep = check_equation(u_prev, res.u, res.z, f_step, tau, gap_tol=1e-9)
        assert rep.passed
        assert rep.value <= 1e-13

    def test_perturbed_state_fails(self):
        g = Grid.line(8, 1.0)
        u_prev = ScalarField(g, np.linspace(0, 1, 8))
        res = rof_prox(u_prev, 0.1, ProxConfig(gap_tol=1e-10))
        bumped = ScalarField(g, res.u.values + 1e-3)
        rep = check_equation(u_prev, bumped, res.z, ScalarField.zeros(g), 0.1,
                             gap_tol=1e-10)
        assert not rep.passed
        assert rep.value > 1e-4

    def test_step_index_threads_to_location(self):
        g = Grid.line(4, 1.0)
        z = _dual_1d(g, np.zeros(5))
        u = ScalarField.zeros(g)
        rep = check_equation(u, u, z, u, 0.1, step=12)
        assert rep.location == 12

    def test_rejects_mismatch_and_bad_tau(self):
        g = Grid.line(4, 1.0)
        g2 = Grid.line(5, 1.0)
        u = ScalarField.zeros(g)
        z = _dual_1d(g, np.zeros(5))
        with pytest.raises(ValueError, match="different grids"):
            check_equation(u, ScalarField.zeros(g2), z, u, 0.1)
        with pytest.raises(ValueError, match="positive"):
            check_equation(u, u, z, u, 0.0)


class TestFlatness:
    def test_zero_dual_charges_full_tv(self):
        g = Grid.line(4, 1.0)
        u = _field(g, [0.0, 1.0, 1.0, 0.0])
        z = _dual_1d(g, np.zeros(5))
        rep = check_flatness(u, z, gap_tol=1e-8)
        assert rep.value == pytest.approx(total_variation(u), abs=1e-15)
        assert rep.value == pytest.approx(2.0, abs=1e-15)
        assert not rep.passed

    def test_aligned_dual_saturates(self):
        # Plateau from constant data: u = 2/3, unique dual [1, 1/3, -1/3, -1].
        g = Grid(1, (3,), (1.0,))
        u = _field(g, [2.0 / 3.0] * 3)
        z = _dual_1d(g, [1.0, 1.0 / 3.0, -1.0 / 3.0, -1.0])
        rep = check_flatness(u, z, gap_tol=1e-12)
        assert rep.passed
        assert rep.value <= 1e-15

    def test_nonnegative_for_admissible_duals(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            g = Grid.box(6, 5, 1.0, 1.0)
            u = ScalarField(g, rng.uniform(-2, 2, (6, 5)))
            z = _random_dual(g, rng)
            for mode in (TvMode.ANISOTROPIC, TvMode.ISOTROPIC):
                rep = check_flatness(u, z, mode, gap_tol=1.0)
                assert rep.value >= -1e-12

    def test_mode_changes_the_target(self):
        rng = np.random.default_rng(5)
        g = Grid.box(6, 6, 1.0, 1.0)
        u = ScalarField(g, rng.uniform(-1, 1, (6, 6)))
        z = DualField.zeros(g)
        iso = check_flatness(u, z, TvMode.ISOTROPIC, gap_tol=1e-8).value
        aniso = check_flatness(u, z, TvMode.ANISOTROPIC, gap_tol=1e-8).value
        assert iso == pytest.approx(total_variation(u, TvMode.ISOTROPIC), abs=1e-12)
        assert aniso == pytest.approx(total_variation(u, TvMode.ANISOTROPIC), abs=1e-12)
        assert iso < aniso

    def test_inadmissible_dual_rejected(self):
        g = Grid.line(4, 1.0)
        u = ScalarField.zeros(g)
        z = _dual_1d(g, [0.0, 1.5, 0.0, 0.0, 0.0])
        with pytest.raises(ValueError, match="unit bound"):
            check_flatness(u, z)


class TestBoundarySign:
    def test_saturated_walls_pass(self):
        g = Grid(1, (3,), (1.0,))
        u = _field(g, [2.0 / 3.0] * 3)
        z = _dual_1d(g, [1.0, 1.0 / 3.0, -1.0 / 3.0, -1.0])
        rep = check_boundary_sign(u, z, gap_tol=1e-12)
        assert rep.passed
        assert rep.value <= 1e-15

    def test_unsaturated_wall_is_charged(self):
        # Left wall: u_b = 0.5, outward trace -z[0] = -0.2,
        # contribution |0.5| + 0.5*(-0.2) = 0.4 per unit face area.
        g = Grid.line(4, 1.0)
        u = _field(g, [0.5, 0.0, 0.0, 0.0])
        z = _dual_1d(g, [0.2, 0.0, 0.0, 0.0, 0.0])
        rep = check_boundary_sign(u, z, gap_tol=1e-8)
        assert rep.value == pytest.approx(0.4 * g.face_area(0), abs=1e-14)
        assert not rep.passed
        assert rep.location == 0

    def test_zero_boundary_cells_are_skipped(self):
        # Spike: boundary cells are exactly zero, so any admissible trace is fine.
        g = Grid(1, (3,), (1.0,))
        u = _field(g, [0.0, 1.0, 0.0])
        z = _dual_1d(g, [1.0, 1.0, -1.0, -1.0])
        rep = check_boundary_sign(u, z, gap_tol=1e-12)
        assert rep.passed
        assert rep.value == 0.0

    def test_2d_accumulates_over_all_sides(self):
        g = Grid.box(3, 3, 1.0, 1.0)
        u = ScalarField(g, np.full((3, 3), 0.9))
        z = DualField.zeros(g)
        rep = check_boundary_sign(u, z, gap_tol=1e-8)
        # every boundary cell contributes |0.9| * face area; 12 wall faces
        expect = 0.9 * (4 * 3) * g.face_area(0)
        assert rep.value == pytest.approx(expect, abs=1e-12)

    def test_tolerance_scales_with_perimeter(self):
        g = Grid.box(4, 4, 2.0, 2.0)
        u = ScalarField.zeros(g)
        z = DualField.zeros(g)
        rep = check_boundary_sign(u, z, gap_tol=1e-8)
        assert rep.tolerance == pytest.approx(10 * 1e-8 * 8.0)


class TestGreen:
    def test_exact_on_random_fields_1d(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            g = Grid.line(int(rng.integers(2, 40)), 1.0)
            v = ScalarField(g, rng.uniform(-3, 3, g.n[0]))
            z = _random_dual(g, rng)
            rep = check_green(z, v)
            assert rep.passed

    def test_exact_on_random_fields_2d(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            nx, ny = int(rng.integers(2, 12)), int(rng.integers(2, 12))
            g = Grid.box(nx, ny, 1.5, 0.7)
            v = ScalarField(g, rng.uniform(-3, 3, (nx, ny)))
            z = _random_dual(g, rng)
            rep = check_green(z, v)
            assert rep.passed

    def test_grid_mismatch_rejected(self):
        g = Grid.line(4, 1.0)
        g2 = Grid.line(6, 1.0)
        z = DualField.zeros(g)
        with pytest.raises(ValueError, match="different grids"):
            check_green(z, ScalarField.zeros(g2))


def _paired_runs(seed, f1=None, f2=None, n=16, t_end=0.3, tau=0.05):
    rng = np.random.default_rng(seed)
    g = Grid.line(n, 1.0)
    u1 = ScalarField(g, rng.uniform(-0.5, 0.5, n))
    u2 = ScalarField(g, rng.uniform(-0.5, 0.5, n))
    f1 = SourceTerm.zero(g) if f1 is None else f1
    f2 = SourceTerm.zero(g) if f2 is None else f2
    cfg = ProxConfig(gap_tol=1e-12)
    t1 = run(u1, f1, t_end, tau, cfg)
    t2 = run(u2, f2, t_end, tau, cfg)
    return t1, t2, f1, f2


class TestContraction:
    def test_equal_sources_distance_never_grows(self):
        t1, t2, f1, f2 = _paired_runs(0)
        rep = check_contraction(t1, t2, f1, f2)
        assert rep.passed
        dists = [
            l2_norm(ScalarField(a.grid, a.values - b.values))
            for a, b in zip(t1.snapshots, t2.snapshots)
        ]
        assert all(b <= a + 1e-10 for a, b in zip(dists, dists[1:]))

    def test_different_sources_per_step_inequality(self):
        g = Grid.line(16, 1.0)
        rng = np.random.default_rng(2)
        f1 = SourceTerm.constant(ScalarField(g, rng.uniform(-1, 1, 16)))
        f2 = SourceTerm.constant(ScalarField(g, rng.uniform(-1, 1, 16)))
        t1, t2, f1, f2 = _paired_runs(3, f1=f1, f2=f2)
        rep = check_contraction(t1, t2, f1, f2)
        assert rep.passed

    def test_explicit_slack_is_respected(self):
        t1, t2, f1, f2 = _paired_runs(1)
        rep = check_contraction(t1, t2, f1, f2, slack=1e-10)
        assert rep.passed
        assert rep.tolerance == 1e-10

    def test_requires_every_step_retained(self):
        g = Grid.line(8, 1.0)
        u0 = ScalarField(g, np.linspace(0, 1, 8))
        f = SourceTerm.zero(g)
        full = run(u0, f, 0.2, 0.05)
        thin = run(u0, f, 0.2, 0.05, snapshot_every=2)
        with pytest.raises(ValueError, match="every step"):
            check_contraction(full, thin, f, f)

    def test_mismatched_schedules_rejected(self):
        g = Grid.line(8, 1.0)
        u0 = ScalarField(g, np.linspace(0, 1, 8))
        f = SourceTerm.zero(g)
        a = run(u0, f, 0.2, 0.05)
        b = run(u0, f, 0.2, 0.1)
        with pytest.raises(ValueError, match="step counts"):
            check_contraction(a, b, f, f)
        c = run(u0, f, 0.1, 0.025)
        with pytest.raises(ValueError, match="schedules"):
            check_contraction(a, c, f, f)


class TestAPriori:
    def test_zero_source_norm_never_exceeds_start(self):
        rng = np.random.default_rng(8)
        g = Grid.line(32, 1.0)
        u0 = ScalarField(g, rng.uniform(-2, 2, 32))
        f = SourceTerm.zero(g)
        traj = run(u0, f, 0.4, 0.05, ProxConfig(gap_tol=1e-12))
        rep = check_apriori(traj, f)
        assert rep.passed
        assert rep.value <= 0.0

    def test_sourced_run_stays_below_gronwall_line(self):
        rng = np.random.default_rng(9)
        g = Grid.line(24, 1.0)
        u0 = ScalarField(g, rng.uniform(-1, 1, 24))
        f = SourceTerm.constant(ScalarField(g, rng.uniform(-2, 2, 24)))
        traj = run(u0, f, 0.5, 0.05, ProxConfig(gap_tol=1e-12))
        rep = check_apriori(traj, f)
        assert rep.passed
        assert rep.value <= 1e-9

    def test_works_on_subsampled_trajectories(self):
        g = Grid.line(16, 1.0)
        u0 = ScalarField(g, np.linspace(-1, 1, 16))
        f = SourceTerm.zero(g)
        traj = run(u0, f, 0.3, 0.05, snapshot_every=3)
        rep = check_apriori(traj, f)
        assert rep.passed

    def test_empty_trajectory_rejected(self):
        g = Grid.line(4, 1.0)
        u = ScalarField.zeros(g)
        empty = __import__("tvflow").Trajectory(
            times=[0.0], snapshots=[u], records=[], final_state=u
        )
        with pytest.raises(ValueError, match="no steps"):
            check_apriori(empty, SourceTerm.zero(g))


class TestMainEstimate:
    def test_holds_on_zero_source_run(self):
        rng = np.random.default_rng(10)
        g = Grid.line(32, 1.0)
        u0 = ScalarField(g, rng.uniform(-2, 2, 32))
        f = SourceTerm.zero(g)
        traj = run(u0, f, 0.4, 0.05, ProxConfig(gap_tol=1e-12))
        rep = check_main_estimate(traj, f)
        assert rep.passed
        assert rep.value <= 0.0

    def test_holds_with_source(self):
        rng = np.random.default_rng(11)
        g = Grid.line(24, 1.0)
        u0 = ScalarField(g, rng.uniform(-1, 1, 24))
        f = SourceTerm.constant(ScalarField(g, rng.uniform(-1, 1, 24)))
        traj = run(u0, f, 0.5, 0.05, ProxConfig(gap_tol=1e-12))
        rep = check_main_estimate(traj, f)
        assert rep.passed

    def test_holds_in_2d_isotropic(self):
        rng = np.random.default_rng(12)
        g = Grid.box(8, 8, 1.0, 1.0)
        u0 = ScalarField(g, rng.uniform(-1, 1, (8, 8)))
        f = SourceTerm.zero(g)
        traj = run(u0, f, 0.1, 0.02, ProxConfig(gap_tol=1e-11, mode=TvMode.ISOTROPIC))
        rep = check_main_estimate(traj, f)
        assert rep.passed
