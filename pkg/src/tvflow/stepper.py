"""Implicit time stepping for the total-variation flow with a source.

Each step advances u by solving the proximal problem with data
y = u_prev + tau * f_step, where f_step is the exact time average of the
source over the step interval.  Every step is certified on the spot: the
equation residual, flatness gap, boundary sign condition, Green identity,
and energy identity are evaluated and packed into the step's record, and
a violation beyond tolerance either aborts the run or is collected as a
warning, per policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .energy import StepRecord, TvMode, energy_ledger, resolve_mode
from .grid import DualField, ScalarField, l2_norm, sup_norm
from .prox import ProxConfig, ProxResult, rof_prox
from .steklov import TimeSeries

__all__ = [
    "SourceTerm",
    "TruncatedPower",
    "Trajectory",
    "AbortedRunError",
    "average_source",
    "step",
    "run",
]


@dataclass(frozen=True)
class TruncatedPower:
    """Time profile min(scale * t**exponent, cap) with closed-form integrals.

    exponent must lie in (-1, 0] so the profile is integrable at t = 0;
    cap = None leaves the power law untruncated.  Exponents at or below
    -1/2 make the profile square-integrable only after truncation, which
    is exactly the class the truncation studies exercise.
    """

    scale: float = 1.0
    exponent: float = -0.75
    cap: float | None = None

    def __post_init__(self) -> None:
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not (-1.0 < self.exponent <= 0.0):
            raise ValueError(f"exponent must lie in (-1, 0], got {self.exponent}")
        if self.cap is not None and not (self.cap > 0.0 and math.isfinite(self.cap)):
            raise ValueError(f"cap must be positive, got {self.cap}")

    @property
    def integrability(self) -> str:
        if self.cap is not None or self.exponent > -0.5:
            return "L2L2"
        return "L1L2"

    def value(self, t: float) -> float:
        if t < 0.0:
            raise ValueError("profile defined for t >= 0")
        if t == 0.0:
            if self.exponent == 0.0:
                raw = self.scale
            else:
                raw = math.inf
        else:
            raw = self.scale * t**self.exponent
        return raw if self.cap is None else min(raw, self.cap)

    def _power_integral(self, a: float, b: float) -> float:
        p1 = self.exponent + 1.0
        return self.scale / p1 * (b**p1 - a**p1)

    def integral(self, a: float, b: float) -> float:
        if not (0.0 <= a <= b):
            raise ValueError(f"bad interval [{a}, {b}]")
        if self.cap is None or self.exponent == 0.0:
            if self.exponent == 0.0:
                val = min(self.scale, self.cap) if self.cap is not None else self.scale
                return val * (b - a)
            return self._power_integral(a, b)
        # cap active on [0, knee], power law after
        knee = (self.cap / self.scale) ** (1.0 / self.exponent)
        total = 0.0
        if a < knee:
            total += self.cap * (min(b, knee) - a)
        if b > knee:
            total += self._power_integral(max(a, knee), b)
        return total


@dataclass(frozen=True)
class SourceTerm:
    """Right-hand side f(t, x) in one of four shapes.

    kinds: "zero"; "constant" (profile g); "separable" (g times a scalar
    time profile, a TimeSeries or TruncatedPower); "sampled" (linear
    interpolation between time-stamped fields, clamped outside).  The
    integrability tag records whether the source is square-integrable in
    time ("L2L2") or merely integrable ("L1L2").
    """

    kind: str
    g: ScalarField | None = None
    a: object | None = None
    frames: tuple = ()
    integrability: str = "L2L2"

    _KINDS = ("zero", "constant", "separable", "sampled")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.integrability not in ("L2L2", "L1L2"):
            raise ValueError(f"unknown integrability tag {self.integrability!r}")
        if self.kind in ("constant", "separable") and self.g is None:
            raise ValueError(f"{self.kind} source needs a spatial profile")
        if self.kind == "separable" and not hasattr(self.a, "integral"):
            raise ValueError("separable source needs a time profile with .integral")
        if self.kind == "sampled":
            if len(self.frames) < 1:
                raise ValueError("sampled source needs at least one frame")
            times = [t for t, _ in self.frames]
            if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
                raise ValueError("sampled frame times must be strictly increasing")
            grids = {f.grid for _, f in self.frames}
            if len(grids) != 1:
                raise ValueError("sampled frames must share one grid")

    @classmethod
    def zero(cls, grid=None) -> "SourceTerm":
        g = None if grid is None else ScalarField.zeros(grid)
        return cls("zero", g=g)

    @classmethod
    def constant(cls, g: ScalarField) -> "SourceTerm":
        return cls("constant", g=g)

    @classmethod
    def separable(cls, g: ScalarField, a, integrability: str | None = None) -> "SourceTerm":
        if integrability is None:
            integrability = getattr(a, "integrability", "L2L2")
        return cls("separable", g=g, a=a, integrability=integrability)

    @classmethod
    def sampled(cls, frames) -> "SourceTerm":
        return cls("sampled", frames=tuple(frames))

    def grid_of(self):
        if self.g is not None:
            return self.g.grid
        if self.kind == "sampled":
            return self.frames[0][1].grid
        return None


def _sampled_average(frames, t0: float, t1: float) -> np.ndarray:
    """Mean of the piecewise-linear-in-time frames over [t0, t1].

    Outside the stamped range the nearest frame is held constant.
    """
    times = np.array([t for t, _ in frames])
    vals = [f.values for _, f in frames]

    def at(t: float) -> np.ndarray:
        if t <= times[0]:
            return vals[0]
        if t >= times[-1]:
            return vals[-1]
        j = int(np.searchsorted(times, t, side="right")) - 1
        w = (t - times[j]) / (times[j + 1] - times[j])
        return (1.0 - w) * vals[j] + w * vals[j + 1]

    inner = times[(times > t0) & (times < t1)]
    nodes = np.concatenate(([t0], inner, [t1]))
    acc = np.zeros_like(vals[0])
    for a, b in zip(nodes[:-1], nodes[1:]):
        acc = acc + 0.5 * (b - a) * (at(a) + at(b))
    return acc / (t1 - t0)


def average_source(f: SourceTerm, t0: float, t1: float) -> ScalarField:
    """Exact time average of the source over one step interval."""
    if not (0.0 <= t0 < t1) or not math.isfinite(t1):
        raise ValueError(f"need 0 <= t0 < t1, got [{t0}, {t1}]")
    if f.kind == "zero":
        if f.g is None:
            raise ValueError("this zero source was built without a grid")
        return f.g.copy()
    if f.kind == "constant":
        return f.g.copy()
    if f.kind == "separable":
        mean_a = f.a.integral(t0, t1) / (t1 - t0)
        return ScalarField(f.g.grid, f.g.values * mean_a)
    return ScalarField(f.frames[0][1].grid, _sampled_average(f.frames, t0, t1))


def _source_step_field(f: SourceTerm, grid, t0: float, t1: float) -> ScalarField:
    if f.kind == "zero":
        return ScalarField.zeros(grid)
    g = average_source(f, t0, t1)
    if g.grid != grid:
        raise ValueError("source lives on a different grid than the state")
    return g


@dataclass(frozen=True)
class Trajectory:
    """A completed (or aborted-and-salvaged) run.

    ``times``/``snapshots`` hold the kept states (always including t = 0
    and the final time); ``duals`` aligns with snapshots from index 1 on
    when duals were kept.  ``source_l1l2`` accumulates sum tau*||f_step||_2,
    the discrete time-L1 space-L2 source size.
    """

    times: list[float]
    snapshots: list[ScalarField]
    records: list[StepRecord]
    final_state: ScalarField
    duals: list[DualField] | None = None
    final_dual: DualField | None = None
    source_l1l2: float = 0.0
    warnings: tuple = ()

    def __post_init__(self) -> None:
        if len(self.times) != len(self.snapshots):
            raise ValueError("times and snapshots must align")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("snapshot times must be strictly increasing")

    @property
    def has_full_snapshots(self) -> bool:
        """True when a state was retained after every step (plus the initial one)."""
        return len(self.snapshots) == len(self.records) + 1


class AbortedRunError(RuntimeError):
    """A certificate exceeded its tolerance under the abort policy."""

    def __init__(self, message: str, record: StepRecord, partial: Trajectory):
        super().__init__(message)
        self.record = record
        self.partial = partial


def _certificate_violations(record: StepRecord, converged: bool, cfg: ProxConfig,
                            perimeter: float, green_scale: float) -> list[str]:
    out = []
    if not converged:
        out.append(
            f"inner solver not converged: gap {record.duality_gap:.3e} > {cfg.gap_tol:.3e}"
        )
    if record.flatness_gap > cfg.gap_tol:
        out.append(f"flatness gap {record.flatness_gap:.3e} > {cfg.gap_tol:.3e}")
    if record.energy_residual > 10.0 * cfg.gap_tol:
        out.append(
            f"energy residual {record.energy_residual:.3e} > {10.0 * cfg.gap_tol:.3e}"
        )
    if record.boundary_violation > 10.0 * cfg.gap_tol * perimeter:
        out.append(
            f"boundary sign value {record.boundary_violation:.3e} > "
            f"{10.0 * cfg.gap_tol * perimeter:.3e}"
        )
    if record.green_residual > 1e-10 * green_scale:
        out.append(f"Green residual {record.green_residual:.3e} > {1e-10 * green_scale:.3e}")
    return out


def _step_full(
    u_prev: ScalarField,
    f_step: ScalarField,
    tau: float,
    cfg: ProxConfig,
    *,
    z0: DualField | None = None,
    w0=None,
    step_index: int = 0,
    t: float | None = None,
) -> tuple[ProxResult, StepRecord, float]:
    from .certificates import check_boundary_sign, check_green

    y = ScalarField(u_prev.grid, u_prev.values + tau * f_step.values)
    result = rof_prox(y, tau, cfg, z0=z0, w0=w0)
    mode = resolve_mode(cfg.mode, u_prev.grid.dim)
    green = check_green(result.z, result.u)
    boundary = check_boundary_sign(result.u, result.z, gap_tol=cfg.gap_tol)
    record = energy_ledger(
        u_prev,
        result.u,
        result.z,
        f_step,
        tau,
        mode,
        step=step_index,
        t=t,
        duality_gap=result.gap,
        green_residual=green.value,
        boundary_violation=boundary.value,
        inner_iterations=result.iterations,
    )
    return result, record, green.tolerance / 1e-10  # green scale for policy checks


def step(
    u_prev: ScalarField,
    f_step: ScalarField,
    tau: float,
    cfg: ProxConfig | None = None,
) -> tuple[ScalarField, StepRecord]:
    """One implicit step from state u_prev under the averaged source f_step."""
    if cfg is None:
        cfg = ProxConfig()
    if u_prev.grid != f_step.grid:
        raise ValueError("state and source live on different grids")
    result, record, _ = _step_full(u_prev, f_step, tau, cfg)
    return result.u, record


def _schedule(t_end: float, tau: float) -> list[float]:
    n = int(math.ceil(t_end / tau - 1e-9))
    times = [min(k * tau, t_end) for k in range(1, n + 1)]
    times[-1] = t_end
    return times


def run(
    u0: ScalarField,
    f: SourceTerm,
    t_end: float,
    tau: float,
    cfg: ProxConfig | None = None,
    snapshot_every: int = 1,
    *,
    on_violation: str = "abort",
    keep_duals: bool = False,
    on_step=None,
) -> Trajectory:
    """March from u0 to t_end in ceil(t_end/tau) steps, certifying each one.

    ``on_violation`` is "abort" (raise AbortedRunError) or "warn" (collect
    messages on the trajectory).  ``on_step(record, u, z)`` is called after
    each certified step, e.g. to stream diagnostics to disk.
    """
    if cfg is None:
        cfg = ProxConfig()
    if not (t_end > 0.0 and math.isfinite(t_end)):
        raise ValueError(f"t_end must be positive and finite, got {t_end}")
    if not (0.0 < tau <= t_end):
        raise ValueError(f"need 0 < tau <= t_end, got tau={tau}, t_end={t_end}")
    if snapshot_every < 1:
        raise ValueError(f"snapshot_every must be >= 1, got {snapshot_every}")
    if on_violation not in ("abort", "warn"):
        raise ValueError(f"unknown violation policy {on_violation!r}")
    f_grid = f.grid_of()
    if f_grid is not None and f_grid != u0.grid:
        raise ValueError("source and initial state live on different grids")

    grid = u0.grid
    perimeter = grid.boundary_measure
    times = _schedule(t_end, tau)
    snap_times = [0.0]
    snapshots = [u0.copy()]
    duals: list[DualField] = []
    records: list[StepRecord] = []
    warnings: list[str] = []
    source_l1l2 = 0.0

    u = u0
    z_prev: DualField | None = None
    w_prev = None
    t_prev = 0.0
    for k, t_k in enumerate(times, start=1):
        tau_k = t_k - t_prev
        f_step = _source_step_field(f, grid, t_prev, t_k)
        result, record, green_scale = _step_full(
            u,
            f_step,
            tau_k,
            cfg,
            z0=z_prev if cfg.warm_start else None,
            w0=w_prev if cfg.warm_start else None,
            step_index=k - 1,
            t=t_k,
        )
        source_l1l2 += tau_k * l2_norm(f_step)
        problems = _certificate_violations(record, result.converged, cfg, perimeter, green_scale)
        keep_now = (k % snapshot_every == 0) or (k == len(times))
        if problems and on_violation == "abort":
            partial = Trajectory(
                times=snap_times,
                snapshots=snapshots,
                records=records,
                final_state=u,
                duals=duals if keep_duals else None,
                final_dual=z_prev,
                source_l1l2=source_l1l2,
                warnings=tuple(warnings),
            )
            raise AbortedRunError(
                f"step {k - 1} (t={t_k:.6g}): " + "; ".join(problems), record, partial
            )
        if problems:
            for p in problems:
                warnings.append(f"step {k - 1} (t={t_k:.6g}): {p}")
        records.append(record)
        u = result.u
        z_prev = result.z
        w_prev = result.cell_multipliers
        if keep_now:
            snap_times.append(t_k)
            snapshots.append(u)
            if keep_duals:
                duals.append(result.z)
        if on_step is not None:
            on_step(record, u, result.z)
        t_prev = t_k

    return Trajectory(
        times=snap_times,
        snapshots=snapshots,
        records=records,
        final_state=u,
        duals=duals if keep_duals else None,
        final_dual=z_prev,
        source_l1l2=source_l1l2,
        warnings=tuple(warnings),
    )


def sup_norm_history(traj: Trajectory) -> list[tuple[float, float]]:
    """(time, sup|u|) pairs over the kept snapshots."""
    return [(t, sup_norm(s)) for t, s in zip(traj.times, traj.snapshots)]
