"""Box grids, cell/face fields, and the staggered difference operators.

Unknowns live at cell centers.  Flux-like quantities live on faces, one
array per axis, with the two extremal faces on each axis sitting on the
domain boundary.  Differences use a zero extension of the cell data past
the boundary, so the boundary faces carry the jump against the exterior
value 0.  With that convention ``gradient`` and ``-divergence`` are exact
adjoints under the volume-weighted pairings below, with no separate
boundary correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid",
    "ScalarField",
    "DualField",
    "gradient",
    "divergence",
    "truncate",
    "inner_product",
    "l2_norm",
    "sup_norm",
    "face_pairing",
    "interior_face_pairing",
    "boundary_flux",
    "boundary_trace",
]


@dataclass(frozen=True)
class Grid:
    """Uniform axis-aligned box of cells, dimension 1 or 2."""

    dim: int
    n: tuple[int, ...]
    h: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {self.dim}")
        n = tuple(int(k) for k in self.n)
        h = tuple(float(s) for s in self.h)
        if len(n) != self.dim or len(h) != self.dim:
            raise ValueError("n and h must have one entry per axis")
        if any(k < 2 for k in n):
            raise ValueError(f"need at least 2 cells per axis, got {n}")
        if any(not (s > 0.0 and math.isfinite(s)) for s in h):
            raise ValueError(f"cell spacings must be positive and finite, got {h}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "h", h)

    @classmethod
    def line(cls, n: int, length: float = 1.0) -> "Grid":
        return cls(1, (n,), (length / n,))

    @classmethod
    def box(cls, nx: int, ny: int, lx: float = 1.0, ly: float = 1.0) -> "Grid":
        return cls(2, (nx, ny), (lx / nx, ly / ny))

    @property
    def extent(self) -> tuple[float, ...]:
        return tuple(k * s for k, s in zip(self.n, self.h))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.h)

    def face_area(self, axis: int) -> float:
        """Measure of a single face orthogonal to ``axis`` (1.0 in 1D)."""
        return self.cell_volume / self.h[axis]

    def face_shape(self, axis: int) -> tuple[int, ...]:
        shape = list(self.n)
        shape[axis] += 1
        return tuple(shape)

    @property
    def boundary_measure(self) -> float:
        """Total measure of the box boundary (2 endpoints in 1D)."""
        total = 0.0
        for ax in range(self.dim):
            count = 1
            for other in range(self.dim):
                if other != ax:
                    count *= self.n[other]
            total += 2.0 * count * self.face_area(ax)
        return total

    def cell_centers(self, axis: int) -> np.ndarray:
        return (np.arange(self.n[axis]) + 0.5) * self.h[axis]


def _as_values(grid: Grid, values: np.ndarray, shape: tuple[int, ...], what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"{what} values must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} values must be finite")
    return arr


@dataclass(frozen=True)
class ScalarField:
    """Cell-centered scalar data on a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _as_values(self.grid, self.values, self.grid.n, "cell"))

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.n))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass(frozen=True)
class DualField:
    """Face-centered vector data: one array per axis, n[axis]+1 faces deep."""

    grid: Grid
    components: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        comps = tuple(self.components)
        if len(comps) != self.grid.dim:
            raise ValueError("need one face array per axis")
        comps = tuple(
            _as_values(self.grid, c, self.grid.face_shape(ax), f"axis-{ax} face")
            for ax, c in enumerate(comps)
        )
        object.__setattr__(self, "components", comps)

    @classmethod
    def zeros(cls, grid: Grid) -> "DualField":
        return cls(grid, tuple(np.zeros(grid.face_shape(ax)) for ax in range(grid.dim)))

    def copy(self) -> "DualField":
        return DualField(self.grid, tuple(c.copy() for c in self.components))

    @property
    def sup_norm(self) -> float:
        return max(float(np.max(np.abs(c))) for c in self.components)


def _check_same_grid(a, b, op: str) -> None:
    if a.grid != b.grid:
        raise ValueError(f"{op}: fields live on different grids")


def gradient(u: ScalarField) -> DualField:
    """Face gradients of ``u`` with zero Dirichlet extension.

    Axis ``ax`` faces: (u_right - u_left)/h, where the missing neighbour
    past either boundary is 0.
    """
    grid = u.grid
    comps = []
    for ax in range(grid.dim):
        pad = [(0, 0)] * grid.dim
        pad[ax] = (1, 1)
        padded = np.pad(u.values, pad)
        comps.append(np.diff(padded, axis=ax) / grid.h[ax])
    return DualField(grid, tuple(comps))


def divergence(p: DualField) -> ScalarField:
    """Cell divergence, the exact negative adjoint of ``gradient``."""
    grid = p.grid
    out = np.zeros(grid.n)
    for ax in range(grid.dim):
        out += np.diff(p.components[ax], axis=ax) / grid.h[ax]
    return ScalarField(grid, out)


def truncate(u: ScalarField, k: float) -> ScalarField:
    """Clamp values to [-k, k] (sign-preserving truncation at height k)."""
    if not (k >= 0.0):
        raise ValueError(f"truncation height must be nonnegative, got {k}")
    return ScalarField(u.grid, np.clip(u.values, -k, k))


def inner_product(u: ScalarField, v: ScalarField) -> float:
    """Volume-weighted cell pairing sum(u*v)*cell_volume."""
    _check_same_grid(u, v, "inner_product")
    return float(np.sum(u.values * v.values)) * u.grid.cell_volume


def l2_norm(u: ScalarField) -> float:
    return math.sqrt(max(inner_product(u, u), 0.0))


def sup_norm(u: ScalarField) -> float:
    return float(np.max(np.abs(u.values)))


def face_pairing(p: DualField, q: DualField) -> float:
    """Pairing over all faces, weighted by cell volume per face."""
    _check_same_grid(p, q, "face_pairing")
    total = 0.0
    for a, b in zip(p.components, q.components):
        total += float(np.sum(a * b))
    return total * p.grid.cell_volume


def _boundary_slices(arr: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    low = np.take(arr, 0, axis=axis)
    high = np.take(arr, -1, axis=axis)
    return low, high


def interior_face_pairing(p: DualField, q: DualField) -> float:
    """Pairing over interior faces only (boundary faces excluded)."""
    _check_same_grid(p, q, "interior_face_pairing")
    total = 0.0
    for ax, (a, b) in enumerate(zip(p.components, q.components)):
        sl = [slice(None)] * p.grid.dim
        sl[ax] = slice(1, -1)
        total += float(np.sum(a[tuple(sl)] * b[tuple(sl)]))
    return total * p.grid.cell_volume


def boundary_flux(v: ScalarField, z: DualField) -> float:
    """Outward flux pairing sum over boundary faces of v_b * z_nu * area.

    z_nu is the outward-oriented face value: -component on the low face,
    +component on the high face of each axis.
    """
    _check_same_grid(v, z, "boundary_flux")
    grid = v.grid
    total = 0.0
    for ax in range(grid.dim):
        v_lo, v_hi = _boundary_slices(v.values, ax)
        z_lo, z_hi = _boundary_slices(z.components[ax], ax)
        total += (float(np.sum(v_hi * z_hi)) - float(np.sum(v_lo * z_lo))) * grid.face_area(ax)
    return total


def boundary_trace(u: ScalarField) -> float:
    """Boundary mass sum over boundary faces of |u_b| * area."""
    grid = u.grid
    total = 0.0
    for ax in range(grid.dim):
        u_lo, u_hi = _boundary_slices(u.values, ax)
        total += (float(np.sum(np.abs(u_lo))) + float(np.sum(np.abs(u_hi)))) * grid.face_area(ax)
    return total
