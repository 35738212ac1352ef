"""Runtime certificates for solver output.

Each check turns one structural property of the computed pair (u, z) —
or of a whole trajectory — into a single residual/margin with an explicit
tolerance, packaged as a CertificateReport.  Default tolerances are
derived from the inner duality gap (every residual below is bounded by an
explicit multiple of it) plus a machine-precision floor; callers may pass
a stricter or looser tolerance explicitly.

Conventions: ``value`` is a residual (nonnegative) or a margin (may be
negative when the certified inequality holds strictly); ``location`` is
the step index when the check is applied across a run, otherwise a flat
index into the check's term layout identifying the worst contributor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .energy import TvMode, flatness_gap as _flatness_value, resolve_mode
from .grid import (
    DualField,
    ScalarField,
    boundary_flux,
    divergence,
    gradient,
    inner_product,
    interior_face_pairing,
    l2_norm,
    sup_norm,
)
from .steklov import discrete_gronwall

__all__ = [
    "CertificateReport",
    "check_equation",
    "check_flatness",
    "check_boundary_sign",
    "check_green",
    "check_contraction",
    "check_apriori",
    "check_main_estimate",
]

_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class CertificateReport:
    """One certified inequality: value <= tolerance iff passed."""

    name: str
    value: float
    tolerance: float
    passed: bool
    location: int | None = None

    def __post_init__(self) -> None:
        if self.passed != (self.value <= self.tolerance):
            raise ValueError("pass flag inconsistent with value/tolerance")

    @staticmethod
    def csv_header() -> str:
        return "name,value,tolerance,pass,location"

    def csv_row(self) -> str:
        loc = "" if self.location is None else str(self.location)
        flag = "true" if self.passed else "false"
        return f"{self.name},{self.value:.17g},{self.tolerance:.17g},{flag},{loc}"


def _report(name: str, value: float, tolerance: float, location: int | None) -> CertificateReport:
    return CertificateReport(name, float(value), float(tolerance), float(value) <= float(tolerance), location)


def check_equation(
    u_prev: ScalarField,
    u_next: ScalarField,
    z: DualField,
    f_step: ScalarField,
    tau: float,
    *,
    gap_tol: float = 1e-8,
    tolerance: float | None = None,
    step: int | None = None,
) -> CertificateReport:
    """Discrete evolution equation: u_next = u_prev + tau*(div z + f_step).

    value = ||u_next - u_prev - tau*div z - tau*f_step||_2 (an L2 residual
    already scaled by tau).
    """
    grid = u_next.grid
    if u_prev.grid != grid or z.grid != grid or f_step.grid != grid:
        raise ValueError("check_equation: fields live on different grids")
    if not (tau > 0.0 and math.isfinite(tau)):
        raise ValueError(f"step length must be positive and finite, got {tau}")
    resid = u_next.values - u_prev.values - tau * divergence(z).values - tau * f_step.values
    value = float(np.sqrt(np.sum(resid * resid) * grid.cell_volume))
    tol = 10.0 * gap_tol if tolerance is None else tolerance
    loc = step if step is not None else int(np.argmax(np.abs(resid)))
    return _report("check_equation", value, tol, loc)


def _flatness_terms(u: ScalarField, z: DualField, mode: TvMode) -> np.ndarray:
    g = gradient(u)
    vol = u.grid.cell_volume
    if mode is TvMode.ISOTROPIC and u.grid.dim == 2:
        from .energy import iso_cell_averages

        ax, ay = iso_cell_averages(g)
        gx, gy = g.components
        wxz = 0.5 * (_masked_x(z.components[0])[:-1, :] + _masked_x(z.components[0])[1:, :])
        wyz = 0.5 * (_masked_y(z.components[1])[:, :-1] + _masked_y(z.components[1])[:, 1:])
        cells = np.sqrt(ax * ax + ay * ay) - (wxz * ax + wyz * ay)
        parts = [cells.ravel()]
        for g_b, z_b in (
            (gx[0, :], z.components[0][0, :]),
            (gx[-1, :], z.components[0][-1, :]),
            (gy[:, 0], z.components[1][:, 0]),
            (gy[:, -1], z.components[1][:, -1]),
        ):
            parts.append(np.abs(g_b) - z_b * g_b)
        return np.concatenate(parts) * vol
    parts = []
    for gc, zc in zip(g.components, z.components):
        parts.append((np.abs(gc) - zc * gc).ravel())
    return np.concatenate(parts) * vol


def _masked_x(comp: np.ndarray) -> np.ndarray:
    out = comp.copy()
    out[0, :] = 0.0
    out[-1, :] = 0.0
    return out


def _masked_y(comp: np.ndarray) -> np.ndarray:
    out = comp.copy()
    out[:, 0] = 0.0
    out[:, -1] = 0.0
    return out


def check_flatness(
    u: ScalarField,
    z: DualField,
    mode: TvMode | None = None,
    *,
    gap_tol: float = 1e-8,
    tolerance: float | None = None,
    step: int | None = None,
) -> CertificateReport:
    """Pairing saturation: TV(u) minus the pairing of z with grad u.

    The value is a sum of termwise-nonnegative deficits (for admissible z),
    zero exactly when z saturates against every jump of u.
    """
    if u.grid != z.grid:
        raise ValueError("check_flatness: fields live on different grids")
    if z.sup_norm > 1.0 + 1e-12:
        raise ValueError("check_flatness: dual field violates the unit bound")
    mode = resolve_mode(mode, u.grid.dim)
    value = _flatness_value(u, z, mode)
    tol = gap_tol if tolerance is None else tolerance
    if step is not None:
        loc = step
    else:
        loc = int(np.argmax(_flatness_terms(u, z, mode)))
    return _report("check_flatness", value, tol, loc)


def _boundary_pairs(u: ScalarField, z: DualField):
    """(u_b, z_nu, face_area) triples per boundary side, outward-oriented."""
    grid = u.grid
    out = []
    for ax in range(grid.dim):
        area = grid.face_area(ax)
        lo_cells = np.take(u.values, 0, axis=ax).ravel()
        hi_cells = np.take(u.values, -1, axis=ax).ravel()
        lo_z = -np.take(z.components[ax], 0, axis=ax).ravel()
        hi_z = np.take(z.components[ax], -1, axis=ax).ravel()
        out.append((lo_cells, lo_z, area))
        out.append((hi_cells, hi_z, area))
    return out


def check_boundary_sign(
    u: ScalarField,
    z: DualField,
    *,
    gap_tol: float = 1e-8,
    tolerance: float | None = None,
    step: int | None = None,
) -> CertificateReport:
    """Dirichlet sign condition: |u_b| + u_b * z_nu vanishes on the boundary.

    Faces where the adjacent cell value is below 10 eps (relative to the
    field size) are skipped: there the normal trace is unconstrained.
    """
    if u.grid != z.grid:
        raise ValueError("check_boundary_sign: fields live on different grids")
    if z.sup_norm > 1.0 + 1e-12:
        raise ValueError("check_boundary_sign: dual field violates the unit bound")
    thresh = 10.0 * _EPS * max(1.0, sup_norm(u))
    total = 0.0
    worst = -1.0
    worst_idx = 0
    offset = 0
    for u_b, z_nu, area in _boundary_pairs(u, z):
        terms = (np.abs(u_b) + u_b * z_nu) * area
        live = np.abs(u_b) >= thresh
        terms = np.where(live, terms, 0.0)
        total += float(np.sum(terms))
        k = int(np.argmax(terms))
        if terms[k] > worst:
            worst = float(terms[k])
            worst_idx = offset + k
        offset += u_b.size
    tol = 10.0 * gap_tol * u.grid.boundary_measure if tolerance is None else tolerance
    loc = step if step is not None else worst_idx
    return _report("check_boundary_sign", total, tol, loc)


def check_green(
    z: DualField,
    v: ScalarField,
    *,
    tolerance: float | None = None,
    step: int | None = None,
) -> CertificateReport:
    """Integration by parts: <div z, v> + interior pairing = boundary flux.

    Exact by construction of the adjoint operator pair; the default
    tolerance is 1e-10 relative to the terms' magnitudes.
    """
    if z.grid != v.grid:
        raise ValueError("check_green: fields live on different grids")
    t_div = inner_product(divergence(z), v)
    t_pair = interior_face_pairing(z, gradient(v))
    t_flux = boundary_flux(v, z)
    value = abs(t_div + t_pair - t_flux)
    scale = max(1.0, abs(t_div) + abs(t_pair) + abs(t_flux))
    tol = 1e-10 * scale if tolerance is None else tolerance
    return _report("check_green", value, tol, step)


def _trajectory_states(traj) -> list[ScalarField]:
    if not traj.has_full_snapshots:
        raise ValueError("this check needs a trajectory holding every step (snapshot_every=1)")
    return traj.snapshots


def _step_sources(traj, f) -> list[ScalarField]:
    from .stepper import _source_step_field

    grid = traj.final_state.grid
    out = []
    t_prev = 0.0
    for rec in traj.records:
        out.append(_source_step_field(f, grid, t_prev, rec.t))
        t_prev = rec.t
    return out


def check_contraction(traj1, traj2, f1, f2, *, slack: float | None = None) -> CertificateReport:
    """Per-step comparison inequality between two runs on one schedule.

    value = max_k [ half||d_{k+1}||^2 - half||d_k||^2 - tau_k <f1 - f2, d_{k+1}> ],
    d = u1 - u2.  With equal sources this certifies that ||d||_2 never
    increases.  The default slack is the gap-derived bound
    tau*(gap1+gap2) + sqrt(2 tau)*(sqrt(gap1)+sqrt(gap2))*||d|| plus a
    rounding floor.
    """
    s1 = _trajectory_states(traj1)
    s2 = _trajectory_states(traj2)
    if len(traj1.records) != len(traj2.records):
        raise ValueError("check_contraction: trajectories have different step counts")
    for r1, r2 in zip(traj1.records, traj2.records):
        if abs(r1.t - r2.t) > 1e-12 * max(1.0, abs(r1.t)):
            raise ValueError("check_contraction: trajectories follow different schedules")
    fs1 = _step_sources(traj1, f1)
    fs2 = _step_sources(traj2, f2)

    worst = -math.inf
    worst_k = 0
    derived = 0.0
    half_prev = 0.5 * l2_norm(ScalarField(s1[0].grid, s1[0].values - s2[0].values)) ** 2
    scale_floor = max(1.0, half_prev)
    for k, (r1, r2) in enumerate(zip(traj1.records, traj2.records)):
        d_next = ScalarField(s1[k + 1].grid, s1[k + 1].values - s2[k + 1].values)
        half_next = 0.5 * l2_norm(d_next) ** 2
        df = ScalarField(fs1[k].grid, fs1[k].values - fs2[k].values)
        margin = half_next - half_prev - r1.tau * inner_product(df, d_next)
        if margin > worst:
            worst = margin
            worst_k = k
        g1 = max(r1.duality_gap, 0.0)
        g2 = max(r2.duality_gap, 0.0)
        bound = r1.tau * (g1 + g2) + math.sqrt(2.0 * r1.tau) * (
            math.sqrt(g1) + math.sqrt(g2)
        ) * l2_norm(d_next)
        derived = max(derived, bound)
        scale_floor = max(scale_floor, half_next)
        half_prev = half_next
    tol = (derived + 1e-12 * scale_floor) if slack is None else slack
    return _report("check_contraction", worst, tol, worst_k)


def _source_norms(traj, f) -> list[float]:
    return [l2_norm(g) for g in _step_sources(traj, f)]


def check_apriori(traj, f, *, slack: float | None = None) -> CertificateReport:
    """L2 growth bound: ||u^k||_2 <= ||u0||_2 + sum_{j<k} tau_j ||f^j||_2.

    value = the worst margin (positive means violated).  Uses only the
    per-step records, so it works on subsampled trajectories too.
    """
    recs = traj.records
    if not recs:
        raise ValueError("check_apriori: trajectory has no steps")
    norms_f = _source_norms(traj, f)
    sigma0 = math.sqrt(2.0 * recs[0].half_l2_prev)
    gains = [r.tau * nf for r, nf in zip(recs, norms_f)]
    bounds = discrete_gronwall(sigma0, gains)
    worst = -math.inf
    worst_k = 0
    slack_derived = 0.0
    for k, r in enumerate(recs):
        sigma = math.sqrt(2.0 * r.half_l2_next)
        slack_derived += math.sqrt(2.0 * r.tau * max(r.duality_gap, 0.0))
        margin = sigma - bounds[k + 1]
        if margin > worst:
            worst = margin
            worst_k = k + 1
    tol = (slack_derived + 1e-12 * max(1.0, sigma0)) if slack is None else slack
    return _report("check_apriori", worst, tol, worst_k)


def check_main_estimate(traj, f, *, slack: float | None = None) -> CertificateReport:
    """Combined energy bound along the run.

    Certifies max_k [ ||u^k||^2 + 2 sum_{j<=k} tau_j TV(u^j) ] against
    ||u0||^2 + 2 (sum_{j<=k} tau_j ||f^j||) * max_j ||u^j|| with the
    accumulated per-step energy residuals as the honest slack.
    """
    recs = traj.records
    if not recs:
        raise ValueError("check_main_estimate: trajectory has no steps")
    norms_f = _source_norms(traj, f)
    sigma0 = math.sqrt(2.0 * recs[0].half_l2_prev)
    sup_sigma = max([sigma0] + [math.sqrt(2.0 * r.half_l2_next) for r in recs])
    u0_sq = 2.0 * recs[0].half_l2_prev
    worst = -math.inf
    worst_k = 0
    tv_sum = 0.0
    f_sum = 0.0
    resid_sum = 0.0
    for k, r in enumerate(recs):
        tv_sum += r.tau * r.tv_next
        f_sum += r.tau * norms_f[k]
        resid_sum += r.energy_residual
        lhs = 2.0 * r.half_l2_next + 2.0 * tv_sum
        rhs = u0_sq + 2.0 * f_sum * sup_sigma
        margin = lhs - rhs
        if margin > worst:
            worst = margin
            worst_k = k
    tol = (2.0 * resid_sum + 1e-12 * max(1.0, u0_sq)) if slack is None else slack
    return _report("check_main_estimate", worst, tol, worst_k)
