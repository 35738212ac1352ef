"""Implicit-step proximal solver for the total-variation functional.

One backward Euler step of the flow is the strongly convex problem

    min_v  TV(v) + 1/(2*tau) ||v - y||^2

solved here by accelerated projected gradient ascent on its dual
(momentum extrapolation between projected iterates, restarted whenever a
gap check regresses).  The dual unknown is a face field z with the
mode-appropriate unit bound; the primal iterate is reconstructed as
u = y + tau * div(z) at every sweep, so the pair (u, z) always satisfies
the discrete evolution equation exactly and the entire optimality error
is concentrated in the duality gap

    gap(z) = TV(u) - <z, grad u>,

a sum of nonnegative per-face (anisotropic) or per-cell (isotropic) terms.
The gap doubles as the runtime certificate consumed downstream.

``taut_string_1d`` is an independent exact solver for the 1D anisotropic
problem (dynamic programming on the piecewise-linear derivative messages
of the chain), used as the reference the iterative method is checked
against.  The two routes share no solver code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .energy import TvMode, iso_cell_averages, resolve_mode
from .grid import DualField, ScalarField, divergence, gradient

try:  # pragma: no cover - exercised implicitly
    from numba import njit as _numba_njit

    def _jit(fn):
        return _numba_njit(cache=True)(fn)

except ImportError:  # pragma: no cover - slow fallback, same arithmetic
    def _jit(fn):
        return fn


__all__ = ["ProxConfig", "ProxResult", "rof_prox", "duality_gap", "taut_string_1d"]

_CHECK_EVERY = 50


@dataclass(frozen=True)
class ProxConfig:
    """Inner-solver knobs.

    dual_step is the ascent step applied to grad(u)/tau; stability requires
    dual_step <= h_min**2 / (4*dim), and None selects that limit.
    """

    gap_tol: float = 1e-8
    max_iters: int = 500_000
    dual_step: float | None = None
    mode: TvMode | None = None
    warm_start: bool = True

    def __post_init__(self) -> None:
        if not (self.gap_tol > 0.0 and math.isfinite(self.gap_tol)):
            raise ValueError(f"gap_tol must be positive and finite, got {self.gap_tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be at least 1, got {self.max_iters}")
        if self.dual_step is not None and not (self.dual_step > 0.0):
            raise ValueError(f"dual_step must be positive, got {self.dual_step}")

    def step_limit(self, grid) -> float:
        return min(grid.h) ** 2 / (4.0 * grid.dim)

    def resolve_step(self, grid) -> float:
        limit = self.step_limit(grid)
        if self.dual_step is None:
            return limit
        if self.dual_step > limit * (1.0 + 1e-12):
            raise ValueError(
                f"dual_step {self.dual_step} exceeds the stability limit {limit}"
            )
        return self.dual_step


@dataclass(frozen=True)
class ProxResult:
    """Certified output of one proximal solve.

    ``u`` is exactly y + tau*div(z) (or exactly zero when the zero
    candidate was certified).  ``cell_multipliers`` carries the isotropic
    per-cell dual state for warm starts; None in anisotropic/1D runs.
    """

    u: ScalarField
    z: DualField
    gap: float
    iterations: int
    converged: bool
    cell_multipliers: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.gap < -1e-9:
            raise ValueError(f"duality gap {self.gap} is significantly negative")
        if self.z.sup_norm > 1.0 + 1e-12:
            raise ValueError("dual field violates the unit bound")


def _raw_gradient(u: np.ndarray, h: tuple[float, ...]) -> list[np.ndarray]:
    comps = []
    for ax in range(u.ndim):
        pad = [(0, 0)] * u.ndim
        pad[ax] = (1, 1)
        comps.append(np.diff(np.pad(u, pad), axis=ax) / h[ax])
    return comps


def _raw_divergence(comps: list[np.ndarray], h: tuple[float, ...]) -> np.ndarray:
    out = np.diff(comps[0], axis=0) / h[0]
    for ax in range(1, len(comps)):
        out = out + np.diff(comps[ax], axis=ax) / h[ax]
    return out


# ---------------------------------------------------------------------------
# inner sweeps (compiled when numba is available)


@_jit
def _sweep_aniso_1d(y, z, zp, w, u, tau, h, r, iters, t0):
    n = y.shape[0]
    t = t0
    for _ in range(iters):
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_next
        for f in range(n + 1):
            w[f] = z[f] + beta * (z[f] - zp[f])
        for i in range(n):
            u[i] = y[i] + tau * (w[i + 1] - w[i]) / h
        for f in range(n + 1):
            left = u[f - 1] if f > 0 else 0.0
            right = u[f] if f < n else 0.0
            v = w[f] + r * (right - left) / h
            if v > 1.0:
                v = 1.0
            elif v < -1.0:
                v = -1.0
            zp[f] = z[f]
            z[f] = v
        t = t_next
    return t


@_jit
def _sweep_aniso_2d(y, zx, zy, zxp, zyp, wxf, wyf, u, tau, hx, hy, r, iters, t0):
    nx, ny = y.shape
    t = t0
    for _ in range(iters):
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_next
        for i in range(nx + 1):
            for j in range(ny):
                wxf[i, j] = zx[i, j] + beta * (zx[i, j] - zxp[i, j])
        for i in range(nx):
            for j in range(ny + 1):
                wyf[i, j] = zy[i, j] + beta * (zy[i, j] - zyp[i, j])
        for i in range(nx):
            for j in range(ny):
                u[i, j] = y[i, j] + tau * (
                    (wxf[i + 1, j] - wxf[i, j]) / hx + (wyf[i, j + 1] - wyf[i, j]) / hy
                )
        for i in range(nx + 1):
            for j in range(ny):
                left = u[i - 1, j] if i > 0 else 0.0
                right = u[i, j] if i < nx else 0.0
                v = wxf[i, j] + r * (right - left) / hx
                if v > 1.0:
                    v = 1.0
                elif v < -1.0:
                    v = -1.0
                zxp[i, j] = zx[i, j]
                zx[i, j] = v
        for i in range(nx):
            for j in range(ny + 1):
                left = u[i, j - 1] if j > 0 else 0.0
                right = u[i, j] if j < ny else 0.0
                v = wyf[i, j] + r * (right - left) / hy
                if v > 1.0:
                    v = 1.0
                elif v < -1.0:
                    v = -1.0
                zyp[i, j] = zy[i, j]
                zy[i, j] = v
        t = t_next
    return t


@_jit
def _sweep_iso_2d(y, zx, zy, zxp, zyp, zxe, zye, wx, wy, wxp, wyp, u, tau, hx, hy, r, iters, t0):
    nx, ny = y.shape
    t = t0
    for _ in range(iters):
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_next
        # extrapolated faces: interior averaged from extrapolated cell
        # multipliers, boundary rows extrapolated scalar-wise
        for i in range(1, nx):
            for j in range(ny):
                el = wx[i - 1, j] + beta * (wx[i - 1, j] - wxp[i - 1, j])
                er = wx[i, j] + beta * (wx[i, j] - wxp[i, j])
                zxe[i, j] = 0.5 * (el + er)
        for j in range(ny):
            zxe[0, j] = zx[0, j] + beta * (zx[0, j] - zxp[0, j])
            zxe[nx, j] = zx[nx, j] + beta * (zx[nx, j] - zxp[nx, j])
        for i in range(nx):
            for j in range(1, ny):
                el = wy[i, j - 1] + beta * (wy[i, j - 1] - wyp[i, j - 1])
                er = wy[i, j] + beta * (wy[i, j] - wyp[i, j])
                zye[i, j] = 0.5 * (el + er)
        for i in range(nx):
            zye[i, 0] = zy[i, 0] + beta * (zy[i, 0] - zyp[i, 0])
            zye[i, ny] = zy[i, ny] + beta * (zy[i, ny] - zyp[i, ny])
        for i in range(nx):
            for j in range(ny):
                u[i, j] = y[i, j] + tau * (
                    (zxe[i + 1, j] - zxe[i, j]) / hx + (zye[i, j + 1] - zye[i, j]) / hy
                )
        # cells: ascent on the averaged interior gradients from the
        # extrapolated base point, then Euclidean ball projection
        for i in range(nx):
            for j in range(ny):
                ax = 0.0
                if i >= 1:
                    ax += (u[i, j] - u[i - 1, j]) / hx
                if i + 1 <= nx - 1:
                    ax += (u[i + 1, j] - u[i, j]) / hx
                ay = 0.0
                if j >= 1:
                    ay += (u[i, j] - u[i, j - 1]) / hy
                if j + 1 <= ny - 1:
                    ay += (u[i, j + 1] - u[i, j]) / hy
                exc = wx[i, j] + beta * (wx[i, j] - wxp[i, j])
                eyc = wy[i, j] + beta * (wy[i, j] - wyp[i, j])
                px = exc + r * 0.5 * ax
                py = eyc + r * 0.5 * ay
                nrm = math.sqrt(px * px + py * py)
                if nrm > 1.0:
                    px /= nrm
                    py /= nrm
                wxp[i, j] = wx[i, j]
                wyp[i, j] = wy[i, j]
                wx[i, j] = px
                wy[i, j] = py
        # boundary faces keep scalar multipliers, clipped to the unit box
        for j in range(ny):
            v = zxe[0, j] + r * u[0, j] / hx
            v = 1.0 if v > 1.0 else (-1.0 if v < -1.0 else v)
            zxp[0, j] = zx[0, j]
            zx[0, j] = v
            v = zxe[nx, j] - r * u[nx - 1, j] / hx
            v = 1.0 if v > 1.0 else (-1.0 if v < -1.0 else v)
            zxp[nx, j] = zx[nx, j]
            zx[nx, j] = v
        for i in range(nx):
            v = zye[i, 0] + r * u[i, 0] / hy
            v = 1.0 if v > 1.0 else (-1.0 if v < -1.0 else v)
            zyp[i, 0] = zy[i, 0]
            zy[i, 0] = v
            v = zye[i, ny] - r * u[i, ny - 1] / hy
            v = 1.0 if v > 1.0 else (-1.0 if v < -1.0 else v)
            zyp[i, ny] = zy[i, ny]
            zy[i, ny] = v
        t = t_next
    # publish interior faces as averages of the settled cell multipliers
    for i in range(1, nx):
        for j in range(ny):
            zx[i, j] = 0.5 * (wx[i - 1, j] + wx[i, j])
    for i in range(nx):
        for j in range(1, ny):
            zy[i, j] = 0.5 * (wy[i, j - 1] + wy[i, j])
    return t


# ---------------------------------------------------------------------------


def _gap_aniso(u: np.ndarray, zc: list[np.ndarray], h, vol) -> float:
    total = 0.0
    for g, z in zip(_raw_gradient(u, h), zc):
        total += float(np.sum(np.abs(g) - z * g))
    return total * vol


def _gap_iso_2d(u, zx, zy, wx, wy, h, vol) -> float:
    gx, gy = _raw_gradient(u, h)
    gxm = gx.copy()
    gxm[0, :] = 0.0
    gxm[-1, :] = 0.0
    gym = gy.copy()
    gym[:, 0] = 0.0
    gym[:, -1] = 0.0
    ax = 0.5 * (gxm[:-1, :] + gxm[1:, :])
    ay = 0.5 * (gym[:, :-1] + gym[:, 1:])
    cells = np.sqrt(ax * ax + ay * ay) - (wx * ax + wy * ay)
    total = float(np.sum(cells))
    for g_b, z_b in (
        (gx[0, :], zx[0, :]),
        (gx[-1, :], zx[-1, :]),
        (gy[:, 0], zy[:, 0]),
        (gy[:, -1], zy[:, -1]),
    ):
        total += float(np.sum(np.abs(g_b) - z_b * g_b))
    return total * vol


def _try_zero_candidate(y, tau, grid, gap_tol):
    """1D dead zone: certify u = 0 by building z with div z = -y/tau.

    Feasible exactly when the scaled antiderivative of y fits in a band of
    width 2; then u = 0 is the true minimiser and the constructed z is its
    certificate.  Returns a ProxResult or None.
    """
    h = grid.h[0]
    prefix = np.concatenate(([0.0], np.cumsum(y) * (h / tau)))
    top, bot = float(np.max(prefix)), float(np.min(prefix))
    if top - bot > 2.0:
        return None
    z = 0.5 * (top + bot) - prefix
    d = np.diff(z) / h
    # gap of the (0, z) pair: (tau/2)||div z + y/tau||^2, nonnegative termwise
    resid = d + y / tau
    gap = 0.5 * tau * float(np.sum(resid * resid)) * grid.cell_volume
    if gap > gap_tol:
        return None
    return ProxResult(
        u=ScalarField.zeros(grid),
        z=DualField(grid, (z,)),
        gap=gap,
        iterations=0,
        converged=True,
    )


def rof_prox(
    y: ScalarField,
    tau: float,
    config: ProxConfig | None = None,
    z0: DualField | None = None,
    w0: tuple[np.ndarray, np.ndarray] | None = None,
) -> ProxResult:
    """Solve min_v TV(v) + 1/(2 tau)||v - y||^2 to a certified duality gap.

    ``z0`` (and in isotropic 2D mode ``w0``) warm-start the dual iterate.
    Exhausting max_iters is reported via converged=False, not raised; the
    best certified pair seen is returned either way.
    """
    if config is None:
        config = ProxConfig()
    if not (tau > 0.0 and math.isfinite(tau)):
        raise ValueError(f"step length must be positive and finite, got {tau}")
    grid = y.grid
    mode = resolve_mode(config.mode, grid.dim)
    sigma = config.resolve_step(grid)
    r = sigma / tau
    vol = grid.cell_volume
    h = grid.h

    if z0 is not None:
        if z0.grid != grid:
            raise ValueError("rof_prox: warm-start dual lives on a different grid")
        if z0.sup_norm > 1.0 + 1e-12:
            raise ValueError("rof_prox: warm-start dual violates the unit bound")
    if w0 is not None:
        if len(w0) != 2 or any(np.shape(c) != grid.n for c in w0):
            raise ValueError("rof_prox: cell multipliers do not match the grid")

    if grid.dim == 1:
        capped = _try_zero_candidate(y.values, tau, grid, config.gap_tol)
        if capped is not None:
            return capped

    if z0 is not None:
        zc = [np.clip(np.ascontiguousarray(c, dtype=float), -1.0, 1.0) for c in z0.components]
    else:
        zc = [np.zeros(grid.face_shape(ax)) for ax in range(grid.dim)]

    iso = mode is TvMode.ISOTROPIC and grid.dim == 2
    if iso:
        if w0 is not None:
            wx = np.clip(np.ascontiguousarray(w0[0], dtype=float), -1.0, 1.0).copy()
            wy = np.clip(np.ascontiguousarray(w0[1], dtype=float), -1.0, 1.0).copy()
            nrm = np.sqrt(wx * wx + wy * wy)
            scale = 1.0 / np.maximum(nrm, 1.0)
            wx *= scale
            wy *= scale
        else:
            # fold a face-only warm start into admissible cell multipliers
            zxm = zc[0].copy()
            zxm[0, :] = 0.0
            zxm[-1, :] = 0.0
            zym = zc[1].copy()
            zym[:, 0] = 0.0
            zym[:, -1] = 0.0
            wx = 0.5 * (zxm[:-1, :] + zxm[1:, :])
            wy = 0.5 * (zym[:, :-1] + zym[:, 1:])
            nrm = np.sqrt(wx * wx + wy * wy)
            scale = 1.0 / np.maximum(nrm, 1.0)
            wx *= scale
            wy *= scale
    else:
        wx = wy = None

    yv = np.ascontiguousarray(y.values, dtype=float)
    u_work = np.empty_like(yv)
    zp = [c.copy() for c in zc]
    scratch = [np.empty_like(c) for c in zc]
    if iso:
        wxp = wx.copy()
        wyp = wy.copy()

    def current_u() -> np.ndarray:
        return yv + tau * _raw_divergence(zc, h)

    def current_gap(u_now: np.ndarray) -> float:
        if iso:
            return _gap_iso_2d(u_now, zc[0], zc[1], wx, wy, h, vol)
        return _gap_aniso(u_now, zc, h, vol)

    u_now = current_u()
    best_gap = current_gap(u_now)
    best_z = [c.copy() for c in zc]
    best_w = (wx.copy(), wy.copy()) if iso else None
    iterations = 0
    momentum = 1.0
    last_gap = best_gap

    while best_gap > config.gap_tol and iterations < config.max_iters:
        chunk = min(_CHECK_EVERY, config.max_iters - iterations)
        if grid.dim == 1:
            momentum = _sweep_aniso_1d(
                yv, zc[0], zp[0], scratch[0], u_work, tau, h[0], r, chunk, momentum
            )
        elif iso:
            momentum = _sweep_iso_2d(
                yv, zc[0], zc[1], zp[0], zp[1], scratch[0], scratch[1],
                wx, wy, wxp, wyp, u_work, tau, h[0], h[1], r, chunk, momentum,
            )
        else:
            momentum = _sweep_aniso_2d(
                yv, zc[0], zc[1], zp[0], zp[1], scratch[0], scratch[1],
                u_work, tau, h[0], h[1], r, chunk, momentum,
            )
        iterations += chunk
        u_now = current_u()
        gap = current_gap(u_now)
        if gap < best_gap:
            best_gap = gap
            best_z = [c.copy() for c in zc]
            if iso:
                best_w = (wx.copy(), wy.copy())
        if gap > last_gap:
            # momentum overshoot: restart the extrapolation from rest
            momentum = 1.0
            for cur, prev in zip(zc, zp):
                prev[:] = cur
            if iso:
                wxp[:] = wx
                wyp[:] = wy
        last_gap = gap

    z_out = DualField(grid, tuple(best_z))
    u_out = ScalarField(grid, yv + tau * _raw_divergence(best_z, h))
    return ProxResult(
        u=u_out,
        z=z_out,
        gap=best_gap,
        iterations=iterations,
        converged=best_gap <= config.gap_tol,
        cell_multipliers=best_w,
    )


def duality_gap(
    u: ScalarField,
    z: DualField,
    y: ScalarField,
    tau: float,
    mode: TvMode | None = None,
) -> float:
    """Primal-dual objective difference for the implicit-step problem.

    Nonnegative whenever z is admissible; zero exactly at the optimal pair.
    """
    from .energy import total_variation  # local import to keep module load light

    if u.grid != y.grid or z.grid != u.grid:
        raise ValueError("duality_gap: fields live on different grids")
    if not (tau > 0.0 and math.isfinite(tau)):
        raise ValueError(f"step length must be positive and finite, got {tau}")
    if z.sup_norm > 1.0 + 1e-12:
        raise ValueError("duality_gap: dual field violates the unit bound")
    mode = resolve_mode(mode, u.grid.dim)
    vol = u.grid.cell_volume
    diff = u.values - y.values
    primal = total_variation(u, mode) + 0.5 / tau * float(np.sum(diff * diff)) * vol
    d = divergence(z).values
    dual = -float(np.sum(d * y.values)) * vol - 0.5 * tau * float(np.sum(d * d)) * vol
    return primal - dual


# ---------------------------------------------------------------------------
# exact 1D reference solver


def taut_string_1d(y: ScalarField, tau: float) -> ScalarField:
    """Exact minimiser of the 1D anisotropic problem by message passing.

    Works on the chain objective sum_i (q/2)(v_i - y_i)^2 + |v_0| +
    sum |v_i - v_{i-1}| + |v_{n-1}| with q = h/tau, tracking the derivative
    of each forward message as an explicit piecewise-linear monotone
    function (knot positions with left/right values, affine tails).  Each
    stage clips the derivative to [-1, 1] and records the clip interval;
    the minimisers are recovered by backtracking through those intervals,
    with the exterior value 0 entering as the final backtracked state.
    """
    grid = y.grid
    if grid.dim != 1:
        raise ValueError("taut_string_1d handles 1D grids only")
    if not (tau > 0.0 and math.isfinite(tau)):
        raise ValueError(f"step length must be positive and finite, got {tau}")
    vals = y.values
    n = vals.size
    q = grid.h[0] / tau

    # message derivative state
    xs = [0.0]
    dl = [q * (0.0 - vals[0]) - 1.0]
    dr = [q * (0.0 - vals[0]) + 1.0]
    sl = q
    sr = q

    bounds: list[tuple[float, float]] = []

    def clip_state() -> tuple[float, float]:
        nonlocal xs, dl, dr, sl, sr
        m = len(xs)
        # lower clip point: first v with derivative >= -1
        if dl[0] >= -1.0:
            lo = xs[0] - (dl[0] + 1.0) / sl
            dr_lo = -1.0
            k0 = 0
        else:
            k0 = -1
            lo = 0.0
            dr_lo = -1.0
            for j in range(m):
                if dr[j] >= -1.0:
                    lo, dr_lo, k0 = xs[j], dr[j], j + 1
                    break
                if j + 1 < m and dl[j + 1] >= -1.0:
                    denom = dl[j + 1] - dr[j]
                    frac = (-1.0 - dr[j]) / denom
                    lo = xs[j] + frac * (xs[j + 1] - xs[j])
                    if lo >= xs[j + 1]:
                        lo, dr_lo, k0 = xs[j + 1], dr[j + 1], j + 2
                    else:
                        dr_lo, k0 = -1.0, j + 1
                    break
            if k0 == -1:
                lo = xs[-1] + (-1.0 - dr[-1]) / sr
                dr_lo, k0 = -1.0, m
        # upper clip point: last v with derivative <= +1
        if dr[-1] <= 1.0:
            hi = xs[-1] + (1.0 - dr[-1]) / sr
            dl_hi = 1.0
            k1 = m
        else:
            k1 = -1
            hi = 0.0
            dl_hi = 1.0
            for j in range(m - 1, -1, -1):
                if dl[j] <= 1.0:
                    hi, dl_hi, k1 = xs[j], dl[j], j
                    break
                if j - 1 >= 0 and dr[j - 1] <= 1.0:
                    denom = dl[j] - dr[j - 1]
                    frac = (1.0 - dr[j - 1]) / denom
                    hi = xs[j - 1] + frac * (xs[j] - xs[j - 1])
                    if hi <= xs[j - 1]:
                        hi, dl_hi, k1 = xs[j - 1], dl[j - 1], j - 1
                    else:
                        dl_hi, k1 = 1.0, j
                    break
            if k1 == -1:
                hi = xs[0] - (dl[0] - 1.0) / sl
                dl_hi, k1 = 1.0, 0
        if hi < lo:  # rounding pinch
            hi = lo
        if hi == lo:
            xs, dl, dr = [lo], [-1.0], [1.0]
        else:
            keep = [j for j in range(k0, k1) if lo < xs[j] < hi]
            xs = [lo] + [xs[j] for j in keep] + [hi]
            dl = [-1.0] + [dl[j] for j in keep] + [dl_hi]
            dr = [dr_lo] + [dr[j] for j in keep] + [1.0]
        sl = 0.0
        sr = 0.0
        return lo, hi

    def add_quadratic(target: float) -> None:
        nonlocal sl, sr
        for j in range(len(xs)):
            delta = q * (xs[j] - target)
            dl[j] += delta
            dr[j] += delta
        sl += q
        sr += q

    for i in range(1, n):
        bounds.append(clip_state())
        add_quadratic(vals[i])
    bounds.append(clip_state())

    out = np.empty(n)
    lo, hi = bounds[n - 1]
    out[n - 1] = min(max(0.0, lo), hi)
    for i in range(n - 2, -1, -1):
        lo, hi = bounds[i]
        out[i] = min(max(out[i + 1], lo), hi)
    return ScalarField(grid, out)
