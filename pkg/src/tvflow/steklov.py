"""Moving time averages over piecewise-linear series, exactly integrated.

Scalar diagnostics of a run (norms, energies, source intensities) are
piecewise-linear functions of time.  This module represents them as
sampled series with linear interpolation and provides the backward and
centered moving averages, an L1 convergence-rate probe for the backward
average, and the additive form of the Gronwall bound.  All integrals of
piecewise-linear data are closed-form (trapezoids between breakpoints),
so the averaging operators themselves introduce no quadrature error:
what the convergence probes measure is purely the averaging radius.

Series are extended by zero outside their sampled range, matching the
compact-support setting the averages are used in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TimeSeries",
    "Weight",
    "backward_average",
    "centered_average",
    "l1_convergence_rate",
    "loglog_slope",
    "approximate_limit",
    "discrete_gronwall",
]


@dataclass(frozen=True)
class TimeSeries:
    """Strictly increasing sample times with values, read piecewise-linearly."""

    t: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if t.ndim != 1 or v.ndim != 1 or t.size != v.size:
            raise ValueError("TimeSeries needs matching 1D time and value arrays")
        if t.size < 2:
            raise ValueError("TimeSeries needs at least 2 samples")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("TimeSeries samples must be finite")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("TimeSeries times must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def value(self, at):
        """Piecewise-linear value, zero outside the sampled range."""
        at = np.asarray(at, dtype=float)
        inside = (at >= self.t[0]) & (at <= self.t[-1])
        out = np.where(inside, np.interp(at, self.t, self.v), 0.0)
        return float(out) if out.ndim == 0 else out

    def integral(self, a: float, b: float) -> float:
        """Exact integral over [a, b] of the zero-extended interpolant."""
        if not (math.isfinite(a) and math.isfinite(b)) or b < a:
            raise ValueError(f"bad integration interval [{a}, {b}]")
        lo = max(a, float(self.t[0]))
        hi = min(b, float(self.t[-1]))
        if hi <= lo:
            return 0.0
        inner = self.t[(self.t > lo) & (self.t < hi)]
        nodes = np.concatenate(([lo], inner, [hi]))
        vals = np.interp(nodes, self.t, self.v)
        return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(nodes)))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,value\n")
            for ti, vi in zip(self.t, self.v):
                fh.write(f"{ti:.17g},{vi:.17g}\n")

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        ts: list[float] = []
        vs: list[float] = []
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline()
            if header.strip() != "t,value":
                raise ValueError(f"{path}: expected header 't,value'")
            for lineno, line in enumerate(fh, start=2):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected two columns")
                ts.append(float(parts[0]))
                vs.append(float(parts[1]))
        return cls(np.asarray(ts), np.asarray(vs))


@dataclass(frozen=True)
class Weight:
    """Nonnegative time weight: identically one, or a smooth interior bump."""

    kind: str
    a: float = 0.0
    b: float = 0.0

    _KINDS = ("one", "smooth_bump")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.kind == "smooth_bump" and not (0.0 < self.a < self.b):
            raise ValueError("smooth_bump needs 0 < a < b")

    @classmethod
    def one(cls) -> "Weight":
        return cls("one")

    @classmethod
    def smooth_bump(cls, a: float, b: float) -> "Weight":
        return cls("smooth_bump", a, b)

    def __call__(self, at):
        at = np.asarray(at, dtype=float)
        if self.kind == "one":
            out = np.ones_like(at)
        else:
            s = (2.0 * at - (self.a + self.b)) / (self.b - self.a)
            out = np.zeros_like(at)
            inside = np.abs(s) < 1.0
            si = s[inside]
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - si * si))
        return float(out) if out.ndim == 0 else out


def _weighted(ts: TimeSeries, eta: Weight) -> TimeSeries:
    if eta.kind == "one":
        return ts
    if not (eta.b < ts.t_end):
        raise ValueError("bump weight support must sit strictly inside the series range")
    return TimeSeries(ts.t, ts.v * eta(ts.t))


def backward_average(ts: TimeSeries, eps: float, eta: Weight | None = None) -> TimeSeries:
    """Trailing mean (1/eps) * integral over [t - eps, t] of the weighted series.

    Values are exact at every output node (union of the sample times and
    their eps-shifts); times before the series start see the zero extension.
    """
    if eta is None:
        eta = Weight.one()
    if not (0.0 < eps < ts.t_end):
        raise ValueError(f"averaging radius {eps} outside (0, {ts.t_end})")
    prod = _weighted(ts, eta)
    out_t = np.unique(np.concatenate((ts.t, ts.t + eps)))
    out_t = out_t[(out_t >= ts.t_start) & (out_t <= ts.t_end)]
    out_v = np.array([prod.integral(t - eps, t) / eps for t in out_t])
    return TimeSeries(out_t, out_v)


def centered_average(ts: TimeSeries, eps: float) -> TimeSeries:
    """Two-sided mean (1/2eps) * integral over [t - eps, t + eps]."""
    if not (0.0 < eps < ts.t_end / 2.0):
        raise ValueError(f"averaging radius {eps} outside (0, {ts.t_end / 2.0})")
    out_t = np.unique(np.concatenate((ts.t - eps, ts.t, ts.t + eps)))
    out_t = out_t[(out_t >= ts.t_start) & (out_t <= ts.t_end)]
    out_v = np.array([ts.integral(t - eps, t + eps) / (2.0 * eps) for t in out_t])
    return TimeSeries(out_t, out_v)


def l1_distance(s1: TimeSeries, s2: TimeSeries, a: float, b: float) -> float:
    """Exact integral of |s1 - s2| over [a, b]; both series must cover [a, b]."""
    if b <= a:
        raise ValueError(f"bad interval [{a}, {b}]")
    for s in (s1, s2):
        if a < s.t_start or b > s.t_end:
            raise ValueError("l1_distance interval leaves a series' sampled range")
    inner = np.concatenate((s1.t, s2.t))
    inner = np.unique(inner[(inner > a) & (inner < b)])
    nodes = np.concatenate(([a], inner, [b]))
    d = s1.value(nodes) - s2.value(nodes)
    total = 0.0
    for k in range(nodes.size - 1):
        d0, d1 = d[k], d[k + 1]
        width = nodes[k + 1] - nodes[k]
        if d0 * d1 < 0.0:
            cut = d0 / (d0 - d1) * width
            total += 0.5 * (abs(d0) * cut + abs(d1) * (width - cut))
        else:
            total += 0.5 * (abs(d0) + abs(d1)) * width
    return float(total)


def l1_convergence_rate(ts: TimeSeries, eps_list) -> list[tuple[float, float]]:
    """L1 error of the backward average against the series, per radius.

    Measured on [max(eps_list), t_end] so every compared point has a full
    averaging window.
    """
    eps_arr = [float(e) for e in eps_list]
    if not eps_arr or any(e <= 0.0 for e in eps_arr):
        raise ValueError("radii must be positive")
    if any(b >= a for a, b in zip(eps_arr, eps_arr[1:])):
        raise ValueError("radii must be strictly decreasing")
    lo = max(max(eps_arr), ts.t_start)
    out = []
    for e in eps_arr:
        avg = backward_average(ts, e, Weight.one())
        out.append((e, l1_distance(avg, ts, lo, ts.t_end)))
    return out


def loglog_slope(pairs) -> float:
    """Least-squares slope of log(error) against log(radius)."""
    xs = np.log([p[0] for p in pairs])
    ys = np.log([max(p[1], 1e-300) for p in pairs])
    if xs.size < 2:
        raise ValueError("need at least two (radius, error) pairs")
    return float(np.polyfit(xs, ys, 1)[0])


def approximate_limit(ts: TimeSeries, at: float, eps_list=(0.04, 0.02, 0.01)) -> float:
    """Centered-average reading of the series at a point.

    Returns the value of the two-sided average at ``at`` for the smallest
    radius in ``eps_list``; at points of continuity this converges to the
    series value as the radii shrink.
    """
    eps = min(float(e) for e in eps_list)
    if not (0.0 < eps < ts.t_end / 2.0):
        raise ValueError("smallest radius out of range")
    return ts.integral(at - eps, at + eps) / (2.0 * eps)


def discrete_gronwall(sigma0: float, gains) -> list[float]:
    """Additive bound sequence: out[k] = sigma0 + sum of the first k gains.

    Dominates every sequence obeying the one-step growth rule
    sigma_k <= sigma_{k-1} + g_k, which the solver map guarantees for the
    state norms (it is nonexpansive and fixes zero).  It is the discrete
    form of the quadratic-to-linear Gronwall conclusion: from
    sigma(t)^2 <= sigma0^2 + 2*integral(g*sigma) follows
    sigma <= sigma0 + integral(g).
    """
    if not (sigma0 >= 0.0 and math.isfinite(sigma0)):
        raise ValueError(f"sigma0 must be nonnegative and finite, got {sigma0}")
    g = np.asarray(list(gains), dtype=float)
    if g.size and (np.any(g < 0.0) or not np.all(np.isfinite(g))):
        raise ValueError("gains must be nonnegative and finite")
    out = np.concatenate(([sigma0], sigma0 + np.cumsum(g)))
    return [float(x) for x in out]
