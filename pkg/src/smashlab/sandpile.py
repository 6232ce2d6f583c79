"""Divisible-sandpile stabilization and the grid smash sum.

The sum of two open sets is computed as the stabilized occupied region of a
divisible sandpile started from the weight ``w = 1_A + 1_B``: every cell with
mass above one keeps one and splits the excess equally among its ``2d`` axis
neighbors, repeated until the largest excess falls below a residual target.
The process is abelian: the stabilized field and odometer do not depend on
the sweep order (checked at tolerance by :func:`abelian_check`).

Mass never leaves the box.  A boundary cell that wants to topple raises
:class:`BoundaryContactError`, which means the grid was sized too small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import (
    BoundaryContactError,
    ConfigError,
    GridMismatchError,
    NonConvergenceError,
)
from .geometry import GridSpec, Mask, rasterize

__all__ = [
    "DensityField",
    "Odometer",
    "StabilizeParams",
    "SumResult",
    "indicator",
    "field_from_shapes",
    "topple_sweep",
    "smash_sum",
    "smash_sum_of_masks",
    "abelian_check",
    "SWEEP_ORDERS",
]

SWEEP_ORDERS = ("jacobi", "forward", "backward")


@dataclass(frozen=True)
class DensityField:
    """Nonnegative real mass per cell (mass of a cell = value * h**d)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.shape != self.grid.shape:
            raise GridMismatchError("field array shape does not match grid")
        if not np.all(np.isfinite(arr)):
            raise ConfigError("field values must be finite")
        if np.any(arr < 0):
            raise ConfigError("field values must be nonnegative")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def total_mass(self) -> float:
        return float(self.values.sum()) * self.grid.cell_volume

    def support(self) -> Mask:
        return Mask(self.grid, self.values > 0)

    def __add__(self, other: "DensityField") -> "DensityField":
        if not self.grid.same_as(other.grid):
            raise GridMismatchError("fields live on different grids")
        return DensityField(self.grid, self.values + other.values)


class Odometer(DensityField):
    """Cumulative mass emitted per cell over all topplings."""


def indicator(mask: Mask) -> DensityField:
    return DensityField(mask.grid, mask.cells.astype(float))


def field_from_shapes(shapes, grid: GridSpec) -> DensityField:
    """Pointwise sum of shape indicators, e.g. ``1_A + 1_B``."""
    values = np.zeros(grid.shape, dtype=float)
    for s in shapes:
        values += rasterize(s, grid).cells
    return DensityField(grid, values)


@dataclass(frozen=True)
class StabilizeParams:
    """Stabilization thresholds and sweep policy.

    ``residual`` is the largest tolerated excess density, ``full`` the slack
    below one at which a cell still counts as occupied, ``mass_rel`` the
    relative mass-conservation drift allowed per run.  ``kappa`` in ``[1, 2)``
    over-topples by that factor (emission capped at the cell's mass); values
    above one accelerate convergence and are validated against plain toppling
    by :func:`abelian_check`.
    """

    residual: float = 1e-10
    full: float = 1e-6
    mass_rel: float = 1e-9
    order: str = "forward"
    kappa: object = 1.0  # factor in [1, 2), or "auto" for a size-based choice
    sweep_cap: int = 0  # 0 -> 10**7 / d
    check_every: int = 8
    strict: bool = True

    def __post_init__(self):
        if self.order not in SWEEP_ORDERS:
            raise ConfigError(f"unknown sweep order {self.order!r}")
        if self.kappa != "auto":
            if not (1.0 <= float(self.kappa) < 2.0):
                raise ConfigError("kappa must lie in [1, 2) or be 'auto'")
            if float(self.kappa) > 1.0 and self.order == "jacobi":
                raise ConfigError("over-relaxed toppling needs a sequential order")
        if self.residual <= 0 or self.full <= 0:
            raise ConfigError("tolerances must be positive")

    def resolve_kappa(self, extent: int) -> float:
        """Concrete over-relaxation factor for a run of the given width."""
        if self.kappa != "auto":
            return float(self.kappa)
        if self.order == "jacobi":
            return 1.0
        return min(1.99, 2.0 / (1.0 + math.sin(math.pi / (extent + 2))))

    def cap_for(self, d: int) -> int:
        return self.sweep_cap if self.sweep_cap > 0 else int(10**7 // d)


@dataclass(frozen=True)
class SumResult:
    """Outcome of a stabilization run."""

    domain: Mask
    odometer: Odometer
    final_field: DensityField
    residual: float
    sweeps: int
    mass_drift: float
    converged: bool


def _active_window(active: np.ndarray, pad: int, shape):
    """Slice bounds covering the active cells, padded and clipped."""
    if not active.any():
        return None
    bounds = []
    for ax in range(active.ndim):
        axes = tuple(a for a in range(active.ndim) if a != ax)
        line = active.any(axis=axes)
        nz = np.flatnonzero(line)
        a = max(0, int(nz[0]) - pad)
        b = min(shape[ax], int(nz[-1]) + 1 + pad)
        bounds.append((a, b))
    return bounds


def stabilize_array(f: np.ndarray, params: StabilizeParams):
    """Stabilize a raw density array in place.

    Returns ``(odometer_array, residual, sweeps, converged)``.  With ``kappa
    > 1`` the run is projected over-relaxation and convergence additionally
    requires the complementarity error (under-filled cells that have
    toppled) to fall below the residual target, so the fixed point matches
    plain toppling.  Raises :class:`BoundaryContactError` if a boundary cell
    ever holds mass above one, and :class:`NonConvergenceError` on a strict
    run that hits the sweep cap.
    """
    d = f.ndim
    u = np.zeros_like(f)
    if float(f.max(initial=0.0)) <= 1.0 + params.residual:
        return u, max(0.0, float(f.max(initial=0.0)) - 1.0), 0, True
    gs = _kernels.GS_SWEEPS[d]
    jac = _kernels.JACOBI_SWEEPS[d]
    comp = _kernels.COMP_ERRORS[d]
    first = _active_window(f > 1.0, params.check_every + 1, f.shape)
    extent = max(b - a for a, b in first)
    kappa = params.resolve_kappa(extent)
    # fallback ladder: strong over-relaxation can limit-cycle at floating
    # point scale near very tight residual targets; back off when stalled
    kappa_ladder = [k for k in (kappa, 1.5, 1.01) if k <= kappa]
    relaxed = kappa > 1.0
    e = np.zeros_like(f) if params.order == "jacobi" else None
    cap = params.cap_for(d)
    sweeps = 0
    residual = math.inf
    best = math.inf
    stalled = 0
    while sweeps < cap:
        active = (f > 1.0) | (u > 0.0) if relaxed else f > 1.0
        bounds = _active_window(active, params.check_every + 1, f.shape)
        if bounds is None:
            residual = 0.0
            break
        flat = [b for ab in bounds for b in ab]
        block = min(params.check_every, cap - sweeps)
        if params.order == "jacobi":
            status = jac(f, e, u, block, *flat)
        else:
            status = gs(f, u, kappa, params.order == "backward", block, *flat)
        sweeps += block
        if status != 0:
            raise BoundaryContactError(
                "mass reached the grid boundary; enlarge the working box"
            )
        sub = f[tuple(slice(a, b) for a, b in bounds)]
        residual = max(0.0, float(sub.max()) - 1.0)
        if relaxed:
            residual = max(residual, comp(f, u, *flat))
        if residual <= params.residual:
            break
        if residual < 0.999 * best:
            best = residual
            stalled = 0
        else:
            stalled += 1
            if stalled > 200 and len(kappa_ladder) > 1:
                kappa_ladder.pop(0)
                kappa = kappa_ladder[0]
                stalled = 0
    converged = residual <= params.residual
    if not converged and params.strict:
        raise NonConvergenceError(
            f"stabilization residual {residual:.3e} above target after {sweeps} sweeps"
        )
    if relaxed:
        np.maximum(f, 0.0, out=f)  # clear any rounding dust from recalls
    return u, residual, sweeps, converged


def topple_sweep(field: DensityField, order: str = "forward", kappa: float = 1.0):
    """One full-grid pass in the given order.

    Returns ``(new_field, residual)`` where the residual is the largest
    remaining excess.  Pure: the input field is not modified.
    """
    if order not in SWEEP_ORDERS:
        raise ConfigError(f"unknown sweep order {order!r}")
    f = field.values.copy()
    u = np.zeros_like(f)
    d = f.ndim
    flat = [b for n in f.shape for b in (0, n)]
    if order == "jacobi":
        status = _kernels.JACOBI_SWEEPS[d](f, np.zeros_like(f), u, 1, *flat)
    else:
        status = _kernels.GS_SWEEPS[d](f, u, kappa, order == "backward", 1, *flat)
    if status != 0:
        raise BoundaryContactError("mass reached the grid boundary during the sweep")
    residual = max(0.0, float(f.max()) - 1.0)
    return DensityField(field.grid, f), residual


def smash_sum(w: DensityField, params: StabilizeParams = StabilizeParams()) -> SumResult:
    """Stabilize a weight field and extract the occupied domain.

    The domain is the set of cells with final mass at least ``1 - full``
    together with the initial support of ``w`` (boundary cells of the support
    may end slightly under-filled).  Total mass is conserved up to floating
    point; the relative drift is recorded and checked against ``mass_rel``.
    """
    f = w.values.copy()
    total0 = float(f.sum())
    u, residual, sweeps, converged = stabilize_array(f, params)
    total1 = float(f.sum())
    drift = abs(total1 - total0) / max(total0, 1e-300)
    if params.strict and total0 > 0 and drift > params.mass_rel:
        raise NonConvergenceError(f"mass drift {drift:.3e} above tolerance")
    domain = Mask(w.grid, (f >= 1.0 - params.full) | (w.values > 0))
    return SumResult(
        domain=domain,
        odometer=Odometer(w.grid, u),
        final_field=DensityField(w.grid, f),
        residual=residual,
        sweeps=sweeps,
        mass_drift=drift,
        converged=converged,
    )


def smash_sum_of_masks(a: Mask, b: Mask, params: StabilizeParams = StabilizeParams()) -> SumResult:
    """Smash sum of two rasterized sets: stabilize ``1_a + 1_b``."""
    if not a.grid.same_as(b.grid):
        raise GridMismatchError("masks live on different grids")
    w = DensityField(a.grid, a.cells.astype(float) + b.cells.astype(float))
    return smash_sum(w, params)


def abelian_check(
    w: DensityField,
    order_a: str,
    order_b: str,
    tol: float = 1e-8,
    params: StabilizeParams = StabilizeParams(),
    kappa_a: float | None = None,
    kappa_b: float | None = None,
) -> bool:
    """Run the sum under two sweep orders and compare outcomes.

    True iff the odometers agree in sup norm within ``tol`` and the extracted
    domains are identical.
    """
    pa = replace(params, order=order_a, kappa=params.kappa if kappa_a is None else kappa_a)
    pb = replace(params, order=order_b, kappa=params.kappa if kappa_b is None else kappa_b)
    ra = smash_sum(w, pa)
    rb = smash_sum(w, pb)
    sup = float(np.max(np.abs(ra.odometer.values - rb.odometer.values)))
    return sup <= tol and bool(np.array_equal(ra.domain.cells, rb.domain.cells))
