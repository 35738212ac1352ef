"""Command-line front end.

Subcommands::

    tvflow run <config>               certified simulation with full outputs
    tvflow verify <output-dir>        recheck a finished run from its files
    tvflow oracle <n> <count>         cross-validate the inner solver in 1D
    tvflow study-mollify <config>     source-truncation comparison study
    tvflow study-extinction <config>  sup-norm decay / extinction time study

Exit codes: 0 all certificates pass, 1 a certificate or cross-check fails,
2 usage or configuration errors.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import certificates as certs
from . import io as tvio
from .config import ConfigError, RunSpec, config_help_text, parse_config
from .energy import total_variation
from .grid import Grid, ScalarField, inner_product, sup_norm
from .prox import ProxConfig, rof_prox, taut_string_1d
from .stepper import AbortedRunError, _source_step_field, run
from .studies import extinction_study, mollification_study

__all__ = ["main", "oracle_battery"]


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def _load_spec(path: str) -> RunSpec:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror or exc}") from None
    return parse_config(text)


class _WorstTracker:
    """Keeps, per certificate name, the report with the worst margin."""

    def __init__(self):
        self._worst: dict = {}
        self.order: list = []

    def offer(self, report) -> None:
        name = report.name
        if name not in self._worst:
            self._worst[name] = report
            self.order.append(name)
            return
        old = self._worst[name]
        if report.value - report.tolerance > old.value - old.tolerance:
            self._worst[name] = report

    def reports(self) -> list:
        return [self._worst[name] for name in self.order]

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self._worst.values())


def _print_reports(reports) -> None:
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        where = f" ({r.location})" if r.location else ""
        print(f"{status} {r.name}: value={r.value:.6g} tolerance={r.tolerance:.6g}{where}")


def _report_from_value(name, value, tolerance, step):
    return certs.CertificateReport(
        name=name,
        value=float(value),
        tolerance=float(tolerance),
        passed=bool(value <= tolerance),
        location=f"step {step}",
    )


def _cmd_run(args) -> int:
    spec = _load_spec(args.config)
    grid = spec.grid()
    u0 = spec.initial_state(grid)
    f = spec.source_term(grid)
    cfg = spec.prox_config()
    tols = spec.tolerance_overrides()
    out = spec["output_dir"]
    os.makedirs(out, exist_ok=True)

    with open(os.path.join(out, "config.txt"), "w", encoding="ascii", newline="\n") as handle:
        handle.write(spec.echo())

    tvio.write_snapshot(u0, 0.0, os.path.join(out, tvio.snapshot_name(0)))

    tau = spec["tau"]
    t_end = spec["t_end"]
    snapshot_every = spec["snapshot_every"]
    save_duals = spec["save_duals"]
    n_steps = int(np.ceil(t_end / tau - 1e-9))

    tol_flat = tols["flatness"] if tols["flatness"] is not None else cfg.gap_tol
    tol_bnd = (
        tols["boundary"]
        if tols["boundary"] is not None
        else 10.0 * cfg.gap_tol * grid.boundary_measure
    )
    tol_energy = 10.0 * cfg.gap_tol

    tracker = _WorstTracker()
    prev_holder = [u0]
    diag = tvio.DiagnosticsWriter(os.path.join(out, "diagnostics.csv"))

    def on_step(record, u, z):
        diag.write(record)
        k = record.step + 1
        if k % snapshot_every == 0 or k == n_steps:
            tvio.write_snapshot(u, record.t, os.path.join(out, tvio.snapshot_name(k)))
            if save_duals:
                tvio.write_dual(z, record.t, os.path.join(out, tvio.dual_name(k)))
        f_step = _source_step_field(f, grid, record.t - record.tau, record.t)
        tracker.offer(
            certs.check_equation(
                prev_holder[0], u, z, f_step, record.tau,
                gap_tol=cfg.gap_tol, tolerance=tols["equation"], step=record.step,
            )
        )
        tracker.offer(_report_from_value("check_flatness", record.flatness_gap, tol_flat, record.step))
        tracker.offer(_report_from_value("check_boundary_sign", record.boundary_violation, tol_bnd, record.step))
        tracker.offer(certs.check_green(z, u, tolerance=tols["green"], step=record.step))
        tracker.offer(_report_from_value("check_energy", record.energy_residual, tol_energy, record.step))
        prev_holder[0] = u

    try:
        traj = run(
            u0, f, t_end, tau, cfg,
            snapshot_every=max(snapshot_every, n_steps),
            on_violation=spec["violation_policy"],
            on_step=on_step,
        )
    except AbortedRunError as exc:
        tvio.write_certificates(tracker.reports(), os.path.join(out, "certificates.csv"))
        _print_reports(tracker.reports())
        _err(f"RUN ABORTED at step {exc.record.step}: {exc}")
        return 1
    finally:
        diag.close()

    reports = tracker.reports()
    reports.append(certs.check_apriori(traj, f))
    reports.append(certs.check_main_estimate(traj, f))
    tvio.write_certificates(reports, os.path.join(out, "certificates.csv"))

    _print_reports(reports)
    final = traj.final_state
    total_inner = sum(r.inner_iterations for r in traj.records)
    print(
        f"run complete: {len(traj.records)} steps to t={traj.times[-1]:.17g}, "
        f"final sup={sup_norm(final):.6g}, inner iterations={total_inner}"
    )
    ok = all(r.passed for r in reports)
    for message in traj.warnings:
        _err(f"warning: {message}")
    print("CERTIFICATES PASS" if ok else "CERTIFICATES FAIL")
    return 0 if ok else 1


def _cmd_verify(args) -> int:
    out = args.directory
    cfg_path = os.path.join(out, "config.txt")
    if not os.path.isdir(out):
        raise ConfigError(f"{out!r} is not a directory")
    spec = _load_spec(cfg_path)
    grid = spec.grid()
    f = spec.source_term(grid)
    cfg = spec.prox_config()
    tols = spec.tolerance_overrides()
    mode = spec.tv_mode()

    failures: list = []
    tracker = _WorstTracker()

    tau = spec["tau"]
    t_end = spec["t_end"]
    snapshot_every = spec["snapshot_every"]
    n_steps = int(np.ceil(t_end / tau - 1e-9))
    expected = {0}
    expected.update(k for k in range(1, n_steps + 1) if k % snapshot_every == 0)
    expected.add(n_steps)

    present = set()
    for name in os.listdir(out):
        if name.startswith("state_") and name.endswith(".tvf"):
            present.add(int(name[len("state_"):-len(".tvf")]))
    missing = sorted(expected - present)
    if missing:
        failures.append(f"missing snapshots for steps {missing}")
    unexpected = sorted(present - expected)
    if unexpected:
        failures.append(f"unexpected snapshot indices {unexpected}")

    try:
        rows = tvio.read_diagnostics(os.path.join(out, "diagnostics.csv"))
    except (OSError, ValueError) as exc:
        failures.append(f"diagnostics unreadable: {exc}")
        rows = []
    by_step = {row["step"]: row for row in rows}
    if rows and len(rows) != n_steps:
        failures.append(f"diagnostics holds {len(rows)} rows, schedule has {n_steps} steps")

    states: dict = {}
    for k in sorted(present & expected):
        try:
            states[k] = tvio.read_snapshot(os.path.join(out, tvio.snapshot_name(k)), grid)
        except ValueError as exc:
            failures.append(str(exc))

    tol_flat = tols["flatness"] if tols["flatness"] is not None else cfg.gap_tol
    tol_bnd = (
        tols["boundary"]
        if tols["boundary"] is not None
        else 10.0 * cfg.gap_tol * grid.boundary_measure
    )

    for k in sorted(states):
        if k == 0:
            continue
        u_k, t_k = states[k]
        step = k - 1
        dual_path = os.path.join(out, tvio.dual_name(k))
        z_k = None
        if os.path.exists(dual_path):
            try:
                z_k, _ = tvio.read_dual(dual_path, grid)
            except ValueError as exc:
                failures.append(str(exc))
        elif spec["save_duals"]:
            failures.append(f"missing dual field for step {step} ({tvio.dual_name(k)})")

        if z_k is not None:
            tracker.offer(
                certs.check_flatness(
                    u_k, z_k, mode, gap_tol=cfg.gap_tol, tolerance=tols["flatness"], step=step
                )
            )
            tracker.offer(
                certs.check_boundary_sign(
                    u_k, z_k, gap_tol=cfg.gap_tol, tolerance=tols["boundary"], step=step
                )
            )
            tracker.offer(certs.check_green(z_k, u_k, tolerance=tols["green"], step=step))
            if k - 1 in states:
                u_prev, t_prev = states[k - 1]
                tau_step = t_k - t_prev
                if tau_step > 0.0:
                    f_step = _source_step_field(f, grid, t_prev, t_k)
                    tracker.offer(
                        certs.check_equation(
                            u_prev, u_k, z_k, f_step, tau_step,
                            gap_tol=cfg.gap_tol, tolerance=tols["equation"], step=step,
                        )
                    )
                else:
                    failures.append(f"snapshot times not increasing at step {step}")

        row = by_step.get(step)
        if row is None:
            failures.append(f"diagnostics row missing for step {step}")
        else:
            l2_sq = 2.0 * 0.5 * inner_product(u_k, u_k)
            tv = total_variation(u_k, mode)
            for label, mine, theirs in (
                ("l2_sq", l2_sq, row["l2_sq"]),
                ("tv", tv, row["tv"]),
                ("t", t_k, row["t"]),
            ):
                if mine != theirs:
                    failures.append(
                        f"diagnostics mismatch at step {step}: {label} recomputes to "
                        f"{mine:.17g}, file says {theirs:.17g}"
                    )

    reports = tracker.reports()
    _print_reports(reports)
    for message in failures:
        print(f"FAIL {message}")
    bad = [r for r in reports if not r.passed]
    for r in bad:
        print(f"verification failed: {r.name} at {r.location}: value={r.value:.6g} > tolerance={r.tolerance:.6g}")
    ok = not bad and not failures
    print("VERIFY PASS" if ok else "VERIFY FAIL")
    return 0 if ok else 1


def oracle_battery(n: int, count: int, *, seed: int = 12345, gap_tol: float = 1e-10):
    """Cross-validate the dual solver against the exact 1D path method.

    Returns ``(worst_error, worst_gap, failures)`` over ``count`` random
    instances: data uniform on [-5, 5], step length uniform on [0.01, 2].
    """
    rng = np.random.default_rng(seed)
    grid = Grid.line(n, 1.0)
    cfg = ProxConfig(gap_tol=gap_tol)
    worst_err = 0.0
    worst_gap = 0.0
    failures = 0
    for _ in range(count):
        y = ScalarField(grid, rng.uniform(-5.0, 5.0, size=n))
        tau = float(rng.uniform(0.01, 2.0))
        result = rof_prox(y, tau, cfg)
        exact = taut_string_1d(y, tau)
        err = float(np.max(np.abs(result.u.values - exact.values)))
        worst_err = max(worst_err, err)
        worst_gap = max(worst_gap, result.gap)
        if not result.converged or err > 1e-6:
            failures += 1
    return worst_err, worst_gap, failures


def _cmd_oracle(args) -> int:
    if args.n < 2 or args.count < 1:
        raise ConfigError("oracle needs n >= 2 and count >= 1")
    # warm pass so compilation time is not billed to the battery
    oracle_battery(args.n, 1, seed=0)
    start = time.perf_counter()
    worst_err, worst_gap, failures = oracle_battery(args.n, args.count)
    elapsed = time.perf_counter() - start
    print(
        f"oracle: {args.count} instances at n={args.n}: worst error={worst_err:.3e}, "
        f"worst gap={worst_gap:.3e}, failures={failures}, elapsed={elapsed:.2f}s"
    )
    ok = failures == 0
    print("ORACLE PASS" if ok else "ORACLE FAIL")
    return 0 if ok else 1


def _cmd_study_mollify(args) -> int:
    spec = _load_spec(args.config)
    grid = spec.grid()
    u0 = spec.initial_state(grid)
    f = spec.source_term(grid)
    if f.kind != "separable":
        raise ConfigError("study-mollify needs source = separable with a power-law time profile")
    levels = spec.mollify_levels()
    out = spec["output_dir"]
    os.makedirs(out, exist_ok=True)
    try:
        study = mollification_study(
            u0, f, spec["t_end"], spec["tau"], spec.prox_config(),
            levels=levels, on_violation=spec["violation_policy"],
        )
    except AbortedRunError as exc:
        _err(f"STUDY ABORTED at step {exc.record.step}: {exc}")
        return 1
    path = os.path.join(out, "mollify.csv")
    with open(path, "w", encoding="ascii", newline="\n") as handle:
        handle.write("level_low,level_high,max_l2_distance,bound,within_bound\n")
        for row in study.rows:
            handle.write(
                f"{row.level_low:.17g},{row.level_high:.17g},"
                f"{row.max_l2_distance:.17g},{row.bound:.17g},"
                f"{'true' if row.within_bound else 'false'}\n"
            )
    for row in study.rows:
        print(
            f"levels ({row.level_low:g}, {row.level_high:g}): "
            f"distance={row.max_l2_distance:.6g} bound={row.bound:.6g} "
            f"{'OK' if row.within_bound else 'EXCEEDED'}"
        )
    print(f"distance decay monotone: {'yes' if study.monotone else 'no'}")
    print(f"bounds respected: {'yes' if study.all_within_bounds else 'no'}")
    ok = study.monotone and study.all_within_bounds
    print("STUDY PASS" if ok else "STUDY FAIL")
    return 0 if ok else 1


def _cmd_study_extinction(args) -> int:
    spec = _load_spec(args.config)
    grid = spec.grid()
    u0 = spec.initial_state(grid)
    f = spec.source_term(grid)
    out = spec["output_dir"]
    os.makedirs(out, exist_ok=True)
    try:
        study = extinction_study(
            u0, f, spec["t_end"], spec["tau"], spec.prox_config(),
            threshold=spec.extinction_threshold(grid),
            snapshot_every=max(spec["snapshot_every"], 1_000_000),
            on_violation=spec["violation_policy"],
        )
    except AbortedRunError as exc:
        _err(f"STUDY ABORTED at step {exc.record.step}: {exc}")
        return 1
    path = os.path.join(out, "extinction.csv")
    with open(path, "w", encoding="ascii", newline="\n") as handle:
        handle.write("t,sup_norm\n")
        for t, s in study.history_rows():
            handle.write(f"{t:.17g},{s:.17g}\n")
    print(f"extinction threshold: {study.threshold:.6g}")
    if study.extinction_time is None:
        print(f"no extinction before t={spec['t_end']:.6g} (final sup={study.sup_norms[-1]:.6g})")
    else:
        print(f"extinction time: {study.extinction_time:.17g}")
    ok = not study.trajectory.warnings
    for message in study.trajectory.warnings:
        _err(f"warning: {message}")
    print("STUDY PASS" if ok else "STUDY FAIL")
    return 0 if ok else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tvflow",
        description="Certified total-variation flow simulator.",
        epilog=config_help_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a certified simulation from a config file")
    p_run.add_argument("config", help="path to the run configuration")
    p_run.set_defaults(func=_cmd_run)

    p_verify = sub.add_parser("verify", help="recheck a finished run from its output directory")
    p_verify.add_argument("directory", help="output directory of a previous run")
    p_verify.set_defaults(func=_cmd_verify)

    p_oracle = sub.add_parser("oracle", help="cross-validate the inner solver against the exact 1D method")
    p_oracle.add_argument("n", type=int, help="grid cells per instance")
    p_oracle.add_argument("count", type=int, help="number of random instances")
    p_oracle.set_defaults(func=_cmd_oracle)

    p_mol = sub.add_parser("study-mollify", help="source-truncation comparison study")
    p_mol.add_argument("config", help="path to the run configuration")
    p_mol.set_defaults(func=_cmd_study_mollify)

    p_ext = sub.add_parser("study-extinction", help="sup-norm decay and extinction time study")
    p_ext.add_argument("config", help="path to the run configuration")
    p_ext.set_defaults(func=_cmd_study_extinction)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return 2
    except ValueError as exc:
        _err(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
