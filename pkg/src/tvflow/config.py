"""Line-oriented run configuration: parsing, validation, defaults, echo.

Format: one ``key = value`` pair per line, ``#`` starts a comment, blank
lines ignored.  Parsing is total — it either returns a fully validated
RunSpec with every default resolved, or raises ConfigError naming the
offending line.  The resolved spec can be rendered back (``echo``) as a
parseable config, which the run command writes next to its outputs so a
verify pass can reconstruct the exact setup.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .energy import TvMode
from .grid import Grid, ScalarField
from .prox import ProxConfig
from .steklov import TimeSeries
from .stepper import SourceTerm, TruncatedPower

__all__ = ["ConfigError", "RunSpec", "parse_config", "config_help_text"]


class ConfigError(ValueError):
    """A config line failed to parse or validate."""


@dataclass(frozen=True)
class _Key:
    name: str
    kind: str  # int | float | bool | str
    default: object
    help: str
    choices: tuple = ()
    required: bool = False


_REGISTRY: list[_Key] = [
    _Key("dimension", "int", None, "spatial dimension, 1 or 2", choices=(1, 2), required=True),
    _Key("nx", "int", None, "cells along x (>= 2)", required=True),
    _Key("ny", "int", 0, "cells along y (>= 2; 2D only)"),
    _Key("length_x", "float", 1.0, "box length along x"),
    _Key("length_y", "float", 1.0, "box length along y (2D only)"),
    _Key("tau", "float", None, "time step length (> 0)", required=True),
    _Key("t_end", "float", None, "final time (>= tau)", required=True),
    _Key("mode", "str", "auto", "total-variation coupling", choices=("auto", "anisotropic", "isotropic")),
    _Key("initial", "str", None, "initial state shape", choices=("zero", "indicator", "disc", "file"), required=True),
    _Key("initial_height", "float", 1.0, "height of the indicator/disc initial state"),
    _Key("indicator_lo_x", "float", 0.3, "indicator lower x edge"),
    _Key("indicator_hi_x", "float", 0.7, "indicator upper x edge"),
    _Key("indicator_lo_y", "float", 0.3, "indicator lower y edge (2D only)"),
    _Key("indicator_hi_y", "float", 0.7, "indicator upper y edge (2D only)"),
    _Key("disc_center_x", "float", 0.5, "disc center x"),
    _Key("disc_center_y", "float", 0.5, "disc center y (2D only)"),
    _Key("disc_radius", "float", 0.25, "disc radius (> 0)"),
    _Key("initial_file", "str", "", "snapshot file for initial = file"),
    _Key("source", "str", "zero", "source kind", choices=("zero", "constant", "separable", "sampled")),
    _Key("source_height", "float", 1.0, "height of the source profile"),
    _Key("source_profile", "str", "indicator", "source spatial profile", choices=("indicator", "disc", "file")),
    _Key("source_lo_x", "float", 0.3, "source indicator lower x edge"),
    _Key("source_hi_x", "float", 0.7, "source indicator upper x edge"),
    _Key("source_lo_y", "float", 0.3, "source indicator lower y edge (2D only)"),
    _Key("source_hi_y", "float", 0.7, "source indicator upper y edge (2D only)"),
    _Key("source_center_x", "float", 0.5, "source disc center x"),
    _Key("source_center_y", "float", 0.5, "source disc center y (2D only)"),
    _Key("source_radius", "float", 0.25, "source disc radius (> 0)"),
    _Key("source_file", "str", "", "snapshot file (profile) or directory of frames (sampled)"),
    _Key("source_time_profile", "str", "constant", "time dependence of a separable source", choices=("constant", "power", "csv")),
    _Key("source_power_scale", "float", 1.0, "scale of the power-law time profile (> 0)"),
    _Key("source_power_exponent", "float", -0.75, "exponent of the power-law time profile, in (-1, 0]"),
    _Key("source_truncation", "float", 0.0, "cap on the time profile (0 = none)"),
    _Key("source_times_file", "str", "", "two-column CSV (t,value) time profile for source_time_profile = csv"),
    _Key("gap_tol", "float", 1e-8, "duality-gap stopping threshold for the inner solver (> 0)"),
    _Key("max_iters", "int", 500_000, "inner iteration budget per step (>= 1)"),
    _Key("dual_step", "float", 0.0, "inner dual ascent step (0 = stability limit)"),
    _Key("warm_start", "bool", True, "reuse the previous step's dual field"),
    _Key("output_dir", "str", "tvflow-out", "directory for run outputs"),
    _Key("snapshot_every", "int", 1, "write every k-th state (>= 1)"),
    _Key("save_duals", "bool", True, "write dual fields next to snapshots"),
    _Key("violation_policy", "str", "abort", "on certificate violation", choices=("abort", "warn")),
    _Key("extinction_threshold", "float", 0.0, "sup-norm level declaring extinction (0 = one cell width)"),
    _Key("mollify_levels", "str", "4,8,16,32", "comma-separated truncation levels for study-mollify"),
    _Key("tol_equation", "float", 0.0, "override for the equation residual tolerance (0 = 10*gap_tol)"),
    _Key("tol_flatness", "float", 0.0, "override for the flatness tolerance (0 = gap_tol)"),
    _Key("tol_boundary", "float", 0.0, "override for the boundary-sign tolerance (0 = 10*gap_tol*perimeter)"),
    _Key("tol_green", "float", 0.0, "override for the Green identity tolerance (0 = 1e-10 relative)"),
]

_BY_NAME = {k.name: k for k in _REGISTRY}

_BOOL_WORDS = {
    "true": True, "yes": True, "on": True, "1": True,
    "false": False, "no": False, "off": False, "0": False,
}


def _convert(key: _Key, raw: str, lineno: int):
    if key.kind == "int":
        try:
            val = int(raw)
        except ValueError:
            raise ConfigError(f"line {lineno}: {key.name} expects an integer, got {raw!r}") from None
    elif key.kind == "float":
        try:
            val = float(raw)
        except ValueError:
            raise ConfigError(f"line {lineno}: {key.name} expects a number, got {raw!r}") from None
        if not math.isfinite(val):
            raise ConfigError(f"line {lineno}: {key.name} must be finite, got {raw!r}")
    elif key.kind == "bool":
        try:
            val = _BOOL_WORDS[raw.lower()]
        except KeyError:
            raise ConfigError(f"line {lineno}: {key.name} expects true/false, got {raw!r}") from None
    else:
        val = raw
    if key.choices and val not in key.choices:
        opts = ", ".join(str(c) for c in key.choices)
        raise ConfigError(f"line {lineno}: {key.name} must be one of {opts}, got {raw!r}")
    return val


@dataclass(frozen=True)
class RunSpec:
    """Fully resolved, validated run configuration."""

    values: dict
    lines: dict = field(default_factory=dict)

    def __getitem__(self, name: str):
        return self.values[name]

    def _fail(self, name: str, message: str):
        lineno = self.lines.get(name)
        where = f"line {lineno}: " if lineno is not None else ""
        raise ConfigError(f"{where}{message}")

    # ---- derived builders -------------------------------------------------

    @property
    def dim(self) -> int:
        return self.values["dimension"]

    def grid(self) -> Grid:
        if self.dim == 1:
            return Grid.line(self.values["nx"], self.values["length_x"])
        return Grid.box(
            self.values["nx"], self.values["ny"], self.values["length_x"], self.values["length_y"]
        )

    def tv_mode(self) -> TvMode | None:
        m = self.values["mode"]
        if m == "auto":
            return None
        return TvMode(m)

    def prox_config(self) -> ProxConfig:
        ds = self.values["dual_step"]
        return ProxConfig(
            gap_tol=self.values["gap_tol"],
            max_iters=self.values["max_iters"],
            dual_step=None if ds == 0.0 else ds,
            mode=self.tv_mode(),
            warm_start=self.values["warm_start"],
        )

    def _indicator(self, grid: Grid, lo, hi, height: float) -> ScalarField:
        vals = np.full(grid.n, height)
        for ax in range(grid.dim):
            centers = grid.cell_centers(ax)
            inside = (centers >= lo[ax]) & (centers < hi[ax])
            shape = [1] * grid.dim
            shape[ax] = grid.n[ax]
            vals = vals * inside.reshape(shape)
        return ScalarField(grid, vals)

    def _disc(self, grid: Grid, center, radius: float, height: float) -> ScalarField:
        dist_sq = np.zeros(grid.n)
        for ax in range(grid.dim):
            centers = grid.cell_centers(ax) - center[ax]
            shape = [1] * grid.dim
            shape[ax] = grid.n[ax]
            dist_sq = dist_sq + (centers**2).reshape(shape)
        return ScalarField(grid, np.where(dist_sq <= radius * radius, height, 0.0))

    def initial_state(self, grid: Grid) -> ScalarField:
        kind = self.values["initial"]
        if kind == "zero":
            return ScalarField.zeros(grid)
        if kind == "indicator":
            lo = (self.values["indicator_lo_x"], self.values["indicator_lo_y"])
            hi = (self.values["indicator_hi_x"], self.values["indicator_hi_y"])
            return self._indicator(grid, lo, hi, self.values["initial_height"])
        if kind == "disc":
            center = (self.values["disc_center_x"], self.values["disc_center_y"])
            return self._disc(grid, center, self.values["disc_radius"], self.values["initial_height"])
        from .io import read_snapshot

        u, _ = read_snapshot(self.values["initial_file"], grid)
        return u

    def _source_profile(self, grid: Grid) -> ScalarField:
        kind = self.values["source_profile"]
        if kind == "indicator":
            lo = (self.values["source_lo_x"], self.values["source_lo_y"])
            hi = (self.values["source_hi_x"], self.values["source_hi_y"])
            return self._indicator(grid, lo, hi, self.values["source_height"])
        if kind == "disc":
            center = (self.values["source_center_x"], self.values["source_center_y"])
            return self._disc(grid, center, self.values["source_radius"], self.values["source_height"])
        from .io import read_snapshot

        g, _ = read_snapshot(self.values["source_file"], grid)
        return g

    def time_profile(self):
        tp = self.values["source_time_profile"]
        cap = self.values["source_truncation"]
        if tp == "constant":
            return TruncatedPower(
                scale=self.values["source_power_scale"],
                exponent=0.0,
                cap=None if cap == 0.0 else cap,
            )
        if tp == "power":
            return TruncatedPower(
                scale=self.values["source_power_scale"],
                exponent=self.values["source_power_exponent"],
                cap=None if cap == 0.0 else cap,
            )
        return TimeSeries.from_csv(self.values["source_times_file"])

    def source_term(self, grid: Grid) -> SourceTerm:
        kind = self.values["source"]
        if kind == "zero":
            return SourceTerm.zero(grid)
        if kind == "constant":
            return SourceTerm.constant(self._source_profile(grid))
        if kind == "separable":
            return SourceTerm.separable(self._source_profile(grid), self.time_profile())
        from .io import read_snapshot_dir

        frames = read_snapshot_dir(self.values["source_file"], grid)
        return SourceTerm.sampled(frames)

    def mollify_levels(self) -> list[float]:
        raw = self.values["mollify_levels"]
        try:
            levels = [float(p) for p in raw.split(",") if p.strip()]
        except ValueError:
            self._fail("mollify_levels", f"mollify_levels expects comma-separated numbers, got {raw!r}")
        if len(levels) < 1 or any(not (v > 0.0) for v in levels):
            self._fail("mollify_levels", "mollify_levels must be positive numbers")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            self._fail("mollify_levels", "mollify_levels must be strictly increasing")
        return levels

    def extinction_threshold(self, grid: Grid) -> float:
        thr = self.values["extinction_threshold"]
        return min(grid.h) if thr == 0.0 else thr

    def tolerance_overrides(self) -> dict:
        out = {}
        for short in ("equation", "flatness", "boundary", "green"):
            v = self.values[f"tol_{short}"]
            out[short] = None if v == 0.0 else v
        return out

    # ---- rendering --------------------------------------------------------

    def _meaningful(self) -> list[str]:
        v = self.values
        keys = ["dimension", "nx"]
        if self.dim == 2:
            keys.append("ny")
        keys.append("length_x")
        if self.dim == 2:
            keys.append("length_y")
        keys += ["tau", "t_end", "mode", "initial"]
        if v["initial"] in ("indicator", "disc"):
            keys.append("initial_height")
        if v["initial"] == "indicator":
            keys += ["indicator_lo_x", "indicator_hi_x"]
            if self.dim == 2:
                keys += ["indicator_lo_y", "indicator_hi_y"]
        elif v["initial"] == "disc":
            keys += ["disc_center_x"]
            if self.dim == 2:
                keys += ["disc_center_y"]
            keys += ["disc_radius"]
        elif v["initial"] == "file":
            keys.append("initial_file")
        keys.append("source")
        if v["source"] in ("constant", "separable"):
            keys.append("source_profile")
            if v["source_profile"] in ("indicator", "disc"):
                keys.append("source_height")
            if v["source_profile"] == "indicator":
                keys += ["source_lo_x", "source_hi_x"]
                if self.dim == 2:
                    keys += ["source_lo_y", "source_hi_y"]
            elif v["source_profile"] == "disc":
                keys += ["source_center_x"]
                if self.dim == 2:
                    keys += ["source_center_y"]
                keys += ["source_radius"]
            else:
                keys.append("source_file")
        if v["source"] == "separable":
            keys.append("source_time_profile")
            if v["source_time_profile"] in ("constant", "power"):
                keys.append("source_power_scale")
            if v["source_time_profile"] == "power":
                keys.append("source_power_exponent")
            if v["source_time_profile"] in ("constant", "power"):
                keys.append("source_truncation")
            if v["source_time_profile"] == "csv":
                keys.append("source_times_file")
        if v["source"] == "sampled":
            keys.append("source_file")
        keys += [
            "gap_tol", "max_iters", "dual_step", "warm_start", "output_dir",
            "snapshot_every", "save_duals", "violation_policy",
            "extinction_threshold", "mollify_levels",
            "tol_equation", "tol_flatness", "tol_boundary", "tol_green",
        ]
        return keys

    def echo(self) -> str:
        parts = []
        for name in self._meaningful():
            key = _BY_NAME[name]
            val = self.values[name]
            if key.kind == "float":
                txt = f"{val:.17g}"
            elif key.kind == "bool":
                txt = "true" if val else "false"
            else:
                txt = str(val)
            parts.append(f"{name} = {txt}")
        return "\n".join(parts) + "\n"


def _validate(spec: RunSpec) -> None:
    v = spec.values
    dim = v["dimension"]
    if v["nx"] < 2:
        spec._fail("nx", f"nx must be at least 2, got {v['nx']}")
    if dim == 2:
        if v["ny"] < 2:
            spec._fail("ny", "ny (>= 2) is required when dimension = 2")
    elif spec.lines.get("ny") is not None:
        spec._fail("ny", "ny is only meaningful when dimension = 2")
    for name in ("length_x", "length_y", "tau"):
        if not (v[name] > 0.0):
            spec._fail(name, f"{name} must be positive, got {v[name]}")
    if not (v["t_end"] >= v["tau"]):
        spec._fail("t_end", f"t_end must be at least tau, got t_end={v['t_end']}, tau={v['tau']}")
    if v["initial"] == "file" and not v["initial_file"]:
        spec._fail("initial_file", "initial = file requires initial_file")
    if v["initial"] == "indicator":
        pairs = [("indicator_lo_x", "indicator_hi_x", "length_x")]
        if dim == 2:
            pairs.append(("indicator_lo_y", "indicator_hi_y", "length_y"))
        for lo, hi, ln in pairs:
            if not (0.0 <= v[lo] < v[hi] <= v[ln]):
                spec._fail(lo, f"need 0 <= {lo} < {hi} <= {ln}")
    if v["initial"] == "disc" and not (v["disc_radius"] > 0.0):
        spec._fail("disc_radius", "disc_radius must be positive")
    if v["source"] in ("constant", "separable"):
        if v["source_profile"] == "file" and not v["source_file"]:
            spec._fail("source_file", "source_profile = file requires source_file")
        if v["source_profile"] == "indicator":
            pairs = [("source_lo_x", "source_hi_x", "length_x")]
            if dim == 2:
                pairs.append(("source_lo_y", "source_hi_y", "length_y"))
            for lo, hi, ln in pairs:
                if not (0.0 <= v[lo] < v[hi] <= v[ln]):
                    spec._fail(lo, f"need 0 <= {lo} < {hi} <= {ln}")
        if v["source_profile"] == "disc" and not (v["source_radius"] > 0.0):
            spec._fail("source_radius", "source_radius must be positive")
    if v["source"] == "separable":
        if v["source_time_profile"] == "csv" and not v["source_times_file"]:
            spec._fail("source_times_file", "source_time_profile = csv requires source_times_file")
        if v["source_time_profile"] == "power":
            if not (-1.0 < v["source_power_exponent"] <= 0.0):
                spec._fail("source_power_exponent", "source_power_exponent must lie in (-1, 0]")
    if v["source"] == "sampled" and not v["source_file"]:
        spec._fail("source_file", "source = sampled requires source_file (a directory of frames)")
    if v["source_power_scale"] <= 0.0:
        spec._fail("source_power_scale", "source_power_scale must be positive")
    if v["source_truncation"] < 0.0:
        spec._fail("source_truncation", "source_truncation must be nonnegative (0 = none)")
    if not (v["gap_tol"] > 0.0):
        spec._fail("gap_tol", f"gap_tol must be positive, got {v['gap_tol']}")
    if v["max_iters"] < 1:
        spec._fail("max_iters", f"max_iters must be at least 1, got {v['max_iters']}")
    if v["dual_step"] < 0.0:
        spec._fail("dual_step", "dual_step must be nonnegative (0 = automatic)")
    if v["snapshot_every"] < 1:
        spec._fail("snapshot_every", f"snapshot_every must be at least 1, got {v['snapshot_every']}")
    if v["extinction_threshold"] < 0.0:
        spec._fail("extinction_threshold", "extinction_threshold must be nonnegative")
    for name in ("tol_equation", "tol_flatness", "tol_boundary", "tol_green"):
        if v[name] < 0.0:
            spec._fail(name, f"{name} must be nonnegative (0 = derived default)")
    if v["mode"] == "isotropic" and dim == 1:
        # 1D couplings coincide; accept and record as anisotropic arithmetic
        pass
    spec.mollify_levels()


def parse_config(text: str) -> RunSpec:
    values: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        name, _, rhs = line.partition("=")
        name = name.strip()
        rhs = rhs.strip()
        if name not in _BY_NAME:
            raise ConfigError(f"line {lineno}: unknown key {name!r}")
        if name in values:
            raise ConfigError(f"line {lineno}: duplicate key {name!r} (first on line {lines[name]})")
        if not rhs:
            raise ConfigError(f"line {lineno}: empty value for {name!r}")
        values[name] = _convert(_BY_NAME[name], rhs, lineno)
        lines[name] = lineno
    for key in _REGISTRY:
        if key.name not in values:
            if key.required:
                raise ConfigError(f"missing required key: {key.name}")
            values[key.name] = key.default
    spec = RunSpec(values=values, lines=lines)
    _validate(spec)
    return spec


def config_help_text() -> str:
    out = ["config keys (one 'key = value' per line, '#' comments):"]
    for key in _REGISTRY:
        if key.required:
            d = "(required)"
        elif key.kind == "bool":
            d = f"(default {'true' if key.default else 'false'})"
        elif key.kind == "float":
            d = f"(default {key.default:.17g})"
        else:
            d = f"(default {key.default!r})" if key.kind == "str" else f"(default {key.default})"
        out.append(f"  {key.name:<24} {key.help} {d}")
    return "\n".join(out)
