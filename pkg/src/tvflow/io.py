"""Plain-text on-disk formats: snapshots, dual fields, diagnostics, certificates.

Snapshot format (``.tvf``)::

    TVF1 <dim> <n_x> [<n_y>] <time>
    <row of comma-separated cell values>
    ...

All numbers are written with ``%.17g`` so round-trips are bitwise exact.
A 1D field is one row; a 2D field has one row per x-index (``n_y`` values
each).  Dual fields use the sibling header ``TVFZ1`` followed by the
x-face block (``n_x + 1`` rows) and, in 2D, the y-face block (``n_x``
rows of ``n_y + 1`` values).  Unknown version headers are rejected, never
guessed at.
"""

from __future__ import annotations

import os

import numpy as np

from .certificates import CertificateReport
from .energy import StepRecord
from .grid import DualField, Grid, ScalarField

__all__ = [
    "write_snapshot", "read_snapshot", "write_dual", "read_dual",
    "snapshot_name", "dual_name", "read_snapshot_dir",
    "DiagnosticsWriter", "DIAGNOSTIC_COLUMNS", "read_diagnostics",
    "write_certificates", "read_certificates",
]


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def snapshot_name(step: int) -> str:
    return f"state_{step:06d}.tvf"


def dual_name(step: int) -> str:
    return f"dual_{step:06d}.tvfz"


def _write_rows(handle, array: np.ndarray) -> None:
    mat = np.atleast_2d(array)
    for row in mat:
        handle.write(",".join(_fmt(v) for v in row))
        handle.write("\n")


def write_snapshot(u: ScalarField, t: float, path: str) -> None:
    """Write a cell field with its time stamp to ``path`` (TVF1 format)."""
    grid = u.grid
    header = " ".join(["TVF1", str(grid.dim), *(str(n) for n in grid.n), _fmt(t)])
    with open(path, "w", encoding="ascii", newline="\n") as handle:
        handle.write(header + "\n")
        _write_rows(handle, u.values)


def _parse_header(line: str, magic: str, path: str):
    tokens = line.split()
    if not tokens or not tokens[0].startswith(magic[:-1]):
        raise ValueError(f"{path}: not a {magic[:-1]}* file (header {line!r})")
    if tokens[0] != magic:
        raise ValueError(f"{path}: unsupported format version {tokens[0]!r} (this reader handles {magic})")
    try:
        dim = int(tokens[1])
        n = tuple(int(tok) for tok in tokens[2 : 2 + dim])
        t = float(tokens[2 + dim])
        extra = tokens[3 + dim :]
    except (IndexError, ValueError):
        raise ValueError(f"{path}: malformed header {line!r}") from None
    if extra or dim not in (1, 2) or any(k < 2 for k in n):
        raise ValueError(f"{path}: malformed header {line!r}")
    return dim, n, t


def _read_matrix(rows: list[str], nrows: int, ncols: int, path: str, what: str) -> np.ndarray:
    if len(rows) != nrows:
        raise ValueError(f"{path}: expected {nrows} rows of {what}, found {len(rows)}")
    out = np.empty((nrows, ncols))
    for i, row in enumerate(rows):
        parts = row.split(",")
        if len(parts) != ncols:
            raise ValueError(f"{path}: row {i + 1} of {what} has {len(parts)} values, expected {ncols}")
        try:
            out[i, :] = [float(p) for p in parts]
        except ValueError:
            raise ValueError(f"{path}: row {i + 1} of {what} contains a non-numeric value") from None
    return out


def _default_grid(dim: int, n: tuple) -> Grid:
    if dim == 1:
        return Grid.line(n[0], 1.0)
    return Grid.box(n[0], n[1], 1.0, 1.0)


def _check_grid(grid: Grid, dim: int, n: tuple, path: str) -> None:
    if grid.dim != dim or grid.n != n:
        raise ValueError(
            f"{path}: file holds a {dim}D field of shape {n}, "
            f"but the given grid is {grid.dim}D of shape {grid.n}"
        )


def read_snapshot(path: str, grid: Grid | None = None):
    """Read a TVF1 snapshot; returns ``(field, time)``.

    With no grid given the field is placed on a unit box of the stored
    shape; a provided grid must match the stored shape exactly.
    """
    with open(path, "r", encoding="ascii") as handle:
        lines = [ln.rstrip("\n") for ln in handle]
    body = [ln for ln in lines[1:] if ln.strip()]
    dim, n, t = _parse_header(lines[0] if lines else "", "TVF1", path)
    if grid is None:
        grid = _default_grid(dim, n)
    else:
        _check_grid(grid, dim, n, path)
    if dim == 1:
        mat = _read_matrix(body, 1, n[0], path, "cell values")
        values = mat[0]
    else:
        values = _read_matrix(body, n[0], n[1], path, "cell values")
    return ScalarField(grid, values), t


def write_dual(z: DualField, t: float, path: str) -> None:
    """Write a face field with its time stamp to ``path`` (TVFZ1 format)."""
    grid = z.grid
    header = " ".join(["TVFZ1", str(grid.dim), *(str(n) for n in grid.n), _fmt(t)])
    with open(path, "w", encoding="ascii", newline="\n") as handle:
        handle.write(header + "\n")
        for comp in z.components:
            _write_rows(handle, comp)


def read_dual(path: str, grid: Grid | None = None):
    """Read a TVFZ1 dual field; returns ``(dual, time)``."""
    with open(path, "r", encoding="ascii") as handle:
        lines = [ln.rstrip("\n") for ln in handle]
    body = [ln for ln in lines[1:] if ln.strip()]
    dim, n, t = _parse_header(lines[0] if lines else "", "TVFZ1", path)
    if grid is None:
        grid = _default_grid(dim, n)
    else:
        _check_grid(grid, dim, n, path)
    if dim == 1:
        mat = _read_matrix(body, 1, n[0] + 1, path, "x-face values")
        comps = (mat[0],)
    else:
        xs = _read_matrix(body[: n[0] + 1], n[0] + 1, n[1], path, "x-face values")
        ys = _read_matrix(body[n[0] + 1 :], n[0], n[1] + 1, path, "y-face values")
        comps = (xs, ys)
    return DualField(grid, comps), t


def read_snapshot_dir(directory: str, grid: Grid | None = None):
    """Read every ``.tvf`` file in a directory as source frames, time-sorted."""
    if not os.path.isdir(directory):
        raise ValueError(f"{directory}: not a directory of snapshot frames")
    names = sorted(fn for fn in os.listdir(directory) if fn.endswith(".tvf"))
    if not names:
        raise ValueError(f"{directory}: contains no .tvf frames")
    frames = []
    for fn in names:
        field, t = read_snapshot(os.path.join(directory, fn), grid)
        if grid is None:
            grid = field.grid
        frames.append((t, field))
    frames.sort(key=lambda pair: pair[0])
    return tuple(frames)


# ---- diagnostics ----------------------------------------------------------

DIAGNOSTIC_COLUMNS = (
    "step", "t", "l2_sq", "tv", "boundary_term", "source_pairing",
    "energy_residual", "duality_gap", "flatness_gap", "boundary_violation",
    "green_residual", "inner_iters",
)


class DiagnosticsWriter:
    """Streams one CSV row per accepted step, flushing as it goes."""

    def __init__(self, path: str):
        self._handle = open(path, "w", encoding="ascii", newline="\n")
        self._handle.write(",".join(DIAGNOSTIC_COLUMNS) + "\n")
        self._handle.flush()

    def write(self, record: StepRecord) -> None:
        row = (
            str(record.step),
            _fmt(record.t),
            _fmt(2.0 * record.half_l2_next),
            _fmt(record.tv_next),
            _fmt(record.boundary_term),
            _fmt(record.source_pairing),
            _fmt(record.energy_residual),
            _fmt(record.duality_gap),
            _fmt(record.flatness_gap),
            _fmt(record.boundary_violation),
            _fmt(record.green_residual),
            str(record.inner_iterations),
        )
        self._handle.write(",".join(row) + "\n")
        self._handle.flush()

    def close(self) -> None:
        self._handle.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def read_diagnostics(path: str) -> list[dict]:
    """Read a diagnostics CSV back into one dict per row."""
    with open(path, "r", encoding="ascii") as handle:
        lines = [ln.rstrip("\n") for ln in handle if ln.strip()]
    if not lines or tuple(lines[0].split(",")) != DIAGNOSTIC_COLUMNS:
        raise ValueError(f"{path}: missing or unexpected diagnostics header")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(DIAGNOSTIC_COLUMNS):
            raise ValueError(f"{path}: line {lineno} has {len(parts)} fields, expected {len(DIAGNOSTIC_COLUMNS)}")
        row: dict = {}
        for name, part in zip(DIAGNOSTIC_COLUMNS, parts):
            row[name] = int(part) if name in ("step", "inner_iters") else float(part)
        rows.append(row)
    return rows


# ---- certificates ---------------------------------------------------------

def write_certificates(reports: list[CertificateReport], path: str) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as handle:
        handle.write(CertificateReport.csv_header() + "\n")
        for report in reports:
            handle.write(report.csv_row() + "\n")


def read_certificates(path: str) -> list[CertificateReport]:
    with open(path, "r", encoding="ascii") as handle:
        lines = [ln.rstrip("\n") for ln in handle if ln.strip()]
    if not lines or lines[0] != CertificateReport.csv_header():
        raise ValueError(f"{path}: missing or unexpected certificates header")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 5:
            raise ValueError(f"{path}: line {lineno} has {len(parts)} fields, expected 5")
        name, value, tolerance, passed, location = parts
        if passed not in ("true", "false"):
            raise ValueError(f"{path}: line {lineno} has pass flag {passed!r}")
        out.append(
            CertificateReport(
                name=name,
                value=float(value),
                tolerance=float(tolerance),
                passed=passed == "true",
                location=location or None,
            )
        )
    return out
