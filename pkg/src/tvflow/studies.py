"""Higher-level numerical studies built on top of the certified run loop.

* extinction_study — runs a decay problem and reports the first time the
  sup norm of the state falls to the extinction threshold.
* mollification_study — re-runs the same problem with the source's time
  profile capped at several levels and checks that trajectory distances
  shrink as the caps grow, each distance below its integral bound.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import ScalarField, l2_norm, sup_norm
from .stepper import SourceTerm, Trajectory, TruncatedPower, run

__all__ = [
    "ExtinctionStudy", "extinction_study",
    "MollifyRow", "MollifyStudy", "mollification_study",
]


@dataclass(frozen=True)
class ExtinctionStudy:
    """Sup-norm history of a run and the detected extinction time, if any."""

    threshold: float
    times: tuple            # (t_0, ..., t_K) including t = 0
    sup_norms: tuple        # sup |u| at the same instants
    extinction_time: float | None
    trajectory: Trajectory

    def history_rows(self) -> list[tuple]:
        return list(zip(self.times, self.sup_norms))


def extinction_study(
    u0: ScalarField,
    f: SourceTerm,
    t_end: float,
    tau: float,
    cfg=None,
    *,
    threshold: float | None = None,
    snapshot_every: int = 1,
    on_violation: str = "abort",
) -> ExtinctionStudy:
    """Run to ``t_end`` and report the first time ``sup |u|`` reaches the threshold.

    The threshold defaults to one cell width (the smallest spacing of the
    grid): below that level a state is indistinguishable from zero at the
    resolution of the discretization.  Detection scans the per-step sup
    norms, so it does not depend on how often snapshots are retained.
    """
    grid = u0.grid
    thr = min(grid.h) if threshold is None else float(threshold)
    if not (thr >= 0.0):
        raise ValueError(f"extinction threshold must be nonnegative, got {thr}")

    times = [0.0]
    sups = [sup_norm(u0)]

    def track(record, u, z):
        times.append(record.t)
        sups.append(sup_norm(u))

    traj = run(
        u0, f, t_end, tau, cfg,
        snapshot_every=snapshot_every,
        on_violation=on_violation,
        on_step=track,
    )
    extinct = None
    for t, s in zip(times, sups):
        if s <= thr:
            extinct = t
            break
    return ExtinctionStudy(
        threshold=thr,
        times=tuple(times),
        sup_norms=tuple(sups),
        extinction_time=extinct,
        trajectory=traj,
    )


@dataclass(frozen=True)
class MollifyRow:
    """One pair of truncation levels and the distance between their runs."""

    level_low: float
    level_high: float
    max_l2_distance: float     # max over steps of ||u_low - u_high||_2
    bound: float               # sum_k tau_k * ||avg f_low - avg f_high||_2

    @property
    def within_bound(self) -> bool:
        scale = max(1.0, self.bound)
        return self.max_l2_distance <= self.bound + 1e-12 * scale


@dataclass(frozen=True)
class MollifyStudy:
    levels: tuple
    rows: tuple                # MollifyRow for every pair, lexicographic
    monotone: bool             # distances shrink as the smaller level grows
    all_within_bounds: bool

    def distance(self, a: float, b: float) -> float:
        lo, hi = min(a, b), max(a, b)
        for row in self.rows:
            if row.level_low == lo and row.level_high == hi:
                return row.max_l2_distance
        raise KeyError(f"no row for levels ({a}, {b})")


def _capped_source(f: SourceTerm, level: float) -> SourceTerm:
    profile = f.a
    capped = TruncatedPower(
        scale=profile.scale,
        exponent=profile.exponent,
        cap=level if profile.cap is None else min(level, profile.cap),
    )
    return SourceTerm.separable(f.g, capped, integrability="L2L2")


def mollification_study(
    u0: ScalarField,
    f: SourceTerm,
    t_end: float,
    tau: float,
    cfg=None,
    *,
    levels=(4.0, 8.0, 16.0, 32.0),
    on_violation: str = "abort",
) -> MollifyStudy:
    """Compare runs whose source time profile is capped at increasing levels.

    Requires a separable source with a power-law time profile.  For each
    level ``n`` the profile is replaced by ``min(a(t), n)`` and the run is
    repeated from the same initial state.  For every pair of levels the
    study reports the largest step-wise L2 distance between the two state
    trajectories together with its certified upper bound, the time-summed
    L2 difference of the averaged sources.  Distances must not grow when
    the smaller level of the pair increases, and must respect the bounds.
    """
    if f.kind != "separable" or not isinstance(f.a, TruncatedPower):
        raise ValueError("mollification study needs a separable source with a power-law time profile")
    levels = tuple(float(v) for v in levels)
    if len(levels) < 2:
        raise ValueError("mollification study needs at least two truncation levels")
    if any(not (v > 0.0) for v in levels) or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("truncation levels must be positive and strictly increasing")

    states: dict = {}
    averages: dict = {}
    taus = None
    for level in levels:
        f_n = _capped_source(f, level)
        seen = []
        step_taus = []
        step_avgs = []

        def track(record, u, z, _f=f_n, _seen=seen, _taus=step_taus, _avgs=step_avgs):
            _seen.append(u.values.copy())
            _taus.append(record.tau)
            t1 = record.t
            _avgs.append(_f.a.integral(t1 - record.tau, t1) / record.tau)

        run(u0, f_n, t_end, tau, cfg, snapshot_every=1_000_000,
            on_violation=on_violation, on_step=track)
        states[level] = seen
        averages[level] = np.asarray(step_avgs)
        if taus is None:
            taus = np.asarray(step_taus)

    g_norm = l2_norm(f.g)
    vol = u0.grid.cell_volume
    rows = []
    for i, a in enumerate(levels):
        for b in levels[i + 1 :]:
            dists = [
                np.sqrt(np.sum((ua - ub) ** 2) * vol)
                for ua, ub in zip(states[a], states[b])
            ]
            bound = float(np.sum(taus * np.abs(averages[a] - averages[b])) * g_norm)
            rows.append(
                MollifyRow(
                    level_low=a,
                    level_high=b,
                    max_l2_distance=float(max(dists)),
                    bound=bound,
                )
            )

    by_min: dict = {}
    for row in rows:
        by_min.setdefault(row.level_low, []).append(row.max_l2_distance)
    mins = sorted(by_min)
    worst = [max(by_min[m]) for m in mins]
    tol = 1e-12 * max(1.0, max(worst, default=0.0))
    monotone = all(later <= earlier + tol for earlier, later in zip(worst, worst[1:]))
    return MollifyStudy(
        levels=levels,
        rows=tuple(rows),
        monotone=monotone,
        all_within_bounds=all(row.within_bound for row in rows),
    )
