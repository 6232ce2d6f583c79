"""Superharmonic test functions, cell-center integrals, and moment ledgers.

All integrals use midpoint (cell-center) sums with the same sampling rule as
rasterization, so set identities transfer to integral identities exactly.
Reductions use ``numpy`` pairwise summation over C-ordered cells, which is
deterministic for a fixed grid.

Built-in function families:

* constants ``+1 / -1`` and coordinates ``+x_i / -x_i`` (harmonic),
* ``neg_square``: ``-(|y - c|^2)``,
* ``newton``: the Newtonian kernel with a pole outside the region
  (``-log|y-p|`` in 2d, ``|y-p|^{-1}`` in 3d, ``-|y-p|`` in 1d),
* ``mollified_newton``: the kernel convolved with the radial bump of radius
  ``rho`` with density proportional to ``(1 - (t/rho)^2)^2``.  The potential
  has a closed piecewise-polynomial form inside the bump, is C^3 across the
  sphere ``t = rho``, and is superharmonic everywhere.

Each family declares analytic bounds on third and fourth derivatives, used
for Taylor-remainder constants and mean-value slack tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GridMismatchError
from .geometry import (
    GridSpec,
    Mask,
    boundary_cell_count,
    cubic_isometries,
)
from .sandpile import DensityField

__all__ = [
    "TestFunction",
    "MomentLedger",
    "make_test_function",
    "constant_fn",
    "coordinate_fn",
    "neg_square_fn",
    "newton_fn",
    "mollified_newton_fn",
    "builtin_suite",
    "integrate",
    "quadrature_slack",
    "slack_tolerance",
    "cubic_average",
    "second_moment",
    "estimate_cs",
    "mean_value_max_excess",
]


@dataclass(frozen=True)
class TestFunction:
    """Evaluator plus declared regularity data.

    ``c3_of`` / ``c4_of`` map ``(t_min, t_max)`` (distance range from the
    pole, or ignored for pole-free functions) to safe sup bounds on the
    Taylor-remainder constant ``|s - P_2|(y) <= c3 |y - x|^3`` and on fourth
    axis derivatives.  ``None`` means no analytic bound is declared.
    """

    name: str
    d: int
    fn: object
    superharmonic_on: str = "everywhere"
    singularities: tuple = ()
    c3_of: object = None
    c4_of: object = None
    params: tuple = ()

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.asarray(self.fn(pts), dtype=float)

    @property
    def id_string(self) -> str:
        if not self.params:
            return self.name
        inner = ",".join(f"{k}={v}" for k, v in self.params)
        return f"{self.name}({inner})"


def constant_fn(d: int, value: float = 1.0) -> TestFunction:
    v = float(value)
    return TestFunction(
        name=f"const{v:+g}",
        d=d,
        fn=lambda pts: np.full(len(pts), v),
        c3_of=lambda tmin, tmax: 0.0,
        c4_of=lambda tmin, tmax: 0.0,
        params=(("value", v),),
    )


def coordinate_fn(d: int, axis: int = 0, sign: int = 1) -> TestFunction:
    if not 0 <= axis < d:
        raise ConfigError("coordinate axis out of range")
    s = 1.0 if sign >= 0 else -1.0
    return TestFunction(
        name=f"coord{'+' if s > 0 else '-'}x{axis}",
        d=d,
        fn=lambda pts: s * pts[:, axis],
        c3_of=lambda tmin, tmax: 0.0,
        c4_of=lambda tmin, tmax: 0.0,
        params=(("axis", axis), ("sign", int(s))),
    )


def neg_square_fn(d: int, center) -> TestFunction:
    c = np.asarray(center, dtype=float)
    return TestFunction(
        name="neg_square",
        d=d,
        fn=lambda pts: -np.sum((pts - c) ** 2, axis=1),
        c3_of=lambda tmin, tmax: 0.0,
        c4_of=lambda tmin, tmax: 0.0,
        params=(("center", tuple(c.tolist())),),
    )


def _kernel_value(d: int, t: np.ndarray) -> np.ndarray:
    if d == 1:
        return -t
    if d == 2:
        return -np.log(t)
    return 1.0 / t


def _kernel_d3_sup(d: int, t: float) -> float:
    # Sup over directions of the third directional derivative of the kernel.
    if d == 1:
        return 0.0
    if d == 2:
        return 2.0 / t**3
    return 6.0 / t**4


def _kernel_d4_sup(d: int, t: float) -> float:
    if d == 1:
        return 0.0
    if d == 2:
        return 24.0 / t**4
    return 96.0 / t**5


def newton_fn(d: int, pole) -> TestFunction:
    """Newtonian kernel with the given pole; superharmonic everywhere, smooth
    away from the pole."""
    p = np.asarray(pole, dtype=float)
    if p.shape != (d,):
        raise ConfigError("pole dimension mismatch")

    def fn(pts):
        t = np.linalg.norm(pts - p, axis=1)
        return _kernel_value(d, t)

    # Safety factor 3 on the directional Taylor constant sup|D^3|/6.
    c3 = lambda tmin, tmax: 0.0 if d == 1 else _kernel_d3_sup(d, tmin) / 2.0
    c4 = lambda tmin, tmax: _kernel_d4_sup(d, tmin)
    return TestFunction(
        name="newton",
        d=d,
        fn=fn,
        superharmonic_on="everywhere (singular at the pole)",
        singularities=(tuple(p.tolist()),),
        c3_of=c3,
        c4_of=c4,
        params=(("pole", tuple(p.tolist())),),
    )


def _mollified_inside(d: int, rho: float, t: np.ndarray) -> np.ndarray:
    # Potential of the unit-mass density ~ (1 - (t/rho)^2)^2 inside its bump.
    x2 = (t / rho) ** 2
    if d == 1:
        return -(rho / 16.0) * (5.0 + 15.0 * x2 - 5.0 * x2**2 + x2**3)
    if d == 2:
        return -math.log(rho) + 11.0 / 12.0 - 1.5 * x2 + 0.75 * x2**2 - x2**3 / 6.0
    return (35.0 - 35.0 * x2 + 21.0 * x2**2 - 5.0 * x2**3) / (16.0 * rho)


def _mollified_inside_d3_sup(d: int, rho: float, t: float) -> float:
    # Directional third-derivative bounds for the interior polynomial.
    if d == 1:
        return 7.5 * t / rho**3 + 7.5 * t**3 / rho**5
    if d == 2:
        return 18.0 * t / rho**4 + 20.0 * t**3 / rho**6
    return 31.5 * t / rho**5 + 37.5 * t**3 / rho**7


def _mollified_inside_d4_sup(d: int, rho: float) -> float:
    if d == 1:
        return 15.0 / rho**3
    if d == 2:
        return 78.0 / rho**4
    return 140.0 / rho**5


def mollified_newton_fn(d: int, pole, rho: float, shift: float = 0.0) -> TestFunction:
    """Newtonian kernel convolved with a radial bump of radius ``rho``.

    Smooth (W^{3,inf}) and superharmonic on all of space; adding ``shift``
    keeps it superharmonic and can make it nonnegative on a working region.
    """
    p = np.asarray(pole, dtype=float)
    rho = float(rho)
    if rho <= 0:
        raise ConfigError("mollification radius must be positive")

    def fn(pts):
        t = np.linalg.norm(pts - p, axis=1)
        out = np.empty_like(t)
        inside = t < rho
        out[inside] = _mollified_inside(d, rho, t[inside])
        tout = t[~inside]
        out[~inside] = _kernel_value(d, np.maximum(tout, rho))
        return out + shift

    def c3(tmin, tmax):
        best = 0.0
        if tmin < rho:
            best = _mollified_inside_d3_sup(d, rho, min(tmax, rho))
        if tmax > rho:
            best = max(best, _kernel_d3_sup(d, max(tmin, rho)))
        return best / 2.0  # sup|D^3|/6 with a safety factor of 3

    def c4(tmin, tmax):
        best = _mollified_inside_d4_sup(d, rho) if tmin < rho else 0.0
        if tmax > rho:
            best = max(best, _kernel_d4_sup(d, max(tmin, rho)))
        return best

    return TestFunction(
        name="mollified_newton",
        d=d,
        fn=fn,
        superharmonic_on="everywhere",
        singularities=(),
        c3_of=c3,
        c4_of=c4,
        params=(("pole", tuple(p.tolist())), ("rho", rho), ("shift", float(shift))),
    )


_FACTORIES = {
    "const": lambda d, cfg: constant_fn(d, cfg.get("value", 1.0)),
    "coord": lambda d, cfg: coordinate_fn(d, cfg.get("axis", 0), cfg.get("sign", 1)),
    "neg_square": lambda d, cfg: neg_square_fn(d, cfg["center"]),
    "newton": lambda d, cfg: newton_fn(d, cfg["pole"]),
    "mollified_newton": lambda d, cfg: mollified_newton_fn(
        d, cfg["pole"], cfg["rho"], cfg.get("shift", 0.0)
    ),
}


def make_test_function(spec: dict, d: int) -> TestFunction:
    """Build a test function from its config form, e.g.
    ``{"id": "newton", "pole": [3.0, 0.0]}``."""
    cfg = dict(spec)
    fid = cfg.pop("id", None)
    if fid not in _FACTORIES:
        raise ConfigError(f"unknown test function id {fid!r}")
    return _FACTORIES[fid](d, cfg)


def builtin_suite(grid: GridSpec, center=None) -> list:
    """The standard quadrature battery on a grid: harmonic pairs, the
    centered concave quadratic, two Newtonian kernels with poles outside the
    box, and a mollified kernel."""
    d = grid.d
    lo = np.asarray(grid.lo)
    hi = grid.hi
    c = np.asarray(center, dtype=float) if center is not None else (lo + hi) / 2.0
    margin = max(0.5, 8 * grid.h)
    pole_a = hi + margin
    pole_b = lo - 1.5 * margin
    rho = 8 * grid.h
    return [
        constant_fn(d, +1.0),
        constant_fn(d, -1.0),
        coordinate_fn(d, 0, +1),
        coordinate_fn(d, 0, -1),
        neg_square_fn(d, c),
        newton_fn(d, pole_a),
        newton_fn(d, pole_b),
        mollified_newton_fn(d, pole_a, rho),
        mollified_newton_fn(d, pole_b, rho),
    ]


# ---------------------------------------------------------------------------
# Integrals and moments


def _guard_singularities(s: TestFunction, m: Mask):
    if not s.singularities or m.count == 0:
        return
    centers = m.true_centers()
    for p in s.singularities:
        dmin = float(np.min(np.linalg.norm(centers - np.asarray(p), axis=1)))
        if dmin < m.grid.h:
            raise ConfigError(f"pole {p} lies inside the integration region")


def integrate(s, m: Mask) -> float:
    """Midpoint integral of ``s`` over a mask: ``h^d`` times the sum of cell
    center values, accumulated in C order (deterministic)."""
    if m.count == 0:
        return 0.0
    if isinstance(s, TestFunction):
        _guard_singularities(s, m)
        vals = s(m.true_centers())
    else:
        vals = np.asarray(s(m.true_centers()), dtype=float)
    return float(vals.sum()) * m.grid.cell_volume


def quadrature_slack(domain: Mask, w: DensityField, s: TestFunction) -> float:
    """Signed slack ``integral(s w) - integral_domain(s)`` by midpoint sums.

    For a superharmonic ``s`` on the domain the continuum value is
    nonnegative; at grid scale it may dip below zero by at most a
    boundary-layer term (see :func:`slack_tolerance`).
    """
    if not domain.grid.same_as(w.grid):
        raise GridMismatchError("domain and weight live on different grids")
    _guard_singularities(s, domain)
    _guard_singularities(s, w.support())
    sup_mask = w.support()
    sw = 0.0
    if sup_mask.count:
        centers = sup_mask.true_centers()
        weights = w.values[tuple(sup_mask.indices().T)]
        sw = float(np.sum(s(centers) * weights)) * w.grid.cell_volume
    return sw - integrate(s, domain)


def slack_tolerance(s: TestFunction, domain: Mask) -> float:
    """Boundary-layer attribution for slack checks: sup of ``|s|`` over the
    domain times one boundary layer of measure."""
    if domain.count == 0:
        return 0.0
    sup = float(np.max(np.abs(s(domain.true_centers()))))
    return sup * boundary_cell_count(domain) * domain.grid.cell_volume


def cubic_average(s, x, y) -> float:
    """Average of ``s`` over the signed-permutation orbit of ``y`` about ``x``.

    For a quadratic ``P`` this equals ``P(x) + lap(P) |y-x|^2 / (2d)``
    exactly; orbit averages of odd monomials and of mixed products vanish.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = len(x)
    group = cubic_isometries(d)
    pts = np.stack([u.apply(y - x) + x for u in group])
    fn = s if not isinstance(s, TestFunction) else s
    vals = np.asarray(fn(pts), dtype=float)
    return float(vals.sum()) / len(group)


def second_moment(m: Mask, about) -> float:
    """``h^d`` times the sum of squared distances of true centers to a point."""
    if m.count == 0:
        return 0.0
    c = np.asarray(about, dtype=float)
    d2 = np.sum((m.true_centers() - c) ** 2, axis=1)
    return float(d2.sum()) * m.grid.cell_volume


@dataclass
class MomentLedger:
    """Running totals for the game: mass, s-integral, and second moment."""

    mass: float = 0.0
    s_integral: float = 0.0
    sigma: float = 0.0

    def check_sigma_cap(self, rad_working: float) -> bool:
        return self.sigma <= self.mass * rad_working**2 + 1e-12


def _distance_range_to(m: Mask, p) -> tuple:
    centers = m.true_centers()
    dist = np.linalg.norm(centers - np.asarray(p, dtype=float), axis=1)
    pad = 0.5 * m.grid.h * math.sqrt(m.grid.d)
    return max(1e-12, float(dist.min()) - pad), float(dist.max()) + pad


def estimate_cs(s: TestFunction, region: Mask) -> float:
    """Taylor-remainder constant ``c_s`` valid on the region.

    Uses the declared analytic bound when available (evaluated on the
    region's distance range to the pole); otherwise samples third
    finite differences over the region and doubles the maximum.
    """
    if region.count == 0:
        raise ConfigError("cannot estimate a derivative bound on an empty region")
    if s.c3_of is not None:
        if s.params and any(k == "pole" for k, _ in s.params):
            pole = dict(s.params)["pole"]
            tmin, tmax = _distance_range_to(region, pole)
        else:
            tmin, tmax = 0.0, math.inf
        return float(s.c3_of(tmin, tmax))
    return 2.0 * _fd_third_derivative_max(s, region)


def estimate_c4(s: TestFunction, region: Mask) -> float:
    if s.c4_of is not None:
        if s.params and any(k == "pole" for k, _ in s.params):
            pole = dict(s.params)["pole"]
            tmin, tmax = _distance_range_to(region, pole)
        else:
            tmin, tmax = 0.0, math.inf
        return float(s.c4_of(tmin, tmax))
    return 2.0 * _fd_third_derivative_max(s, region)  # crude fallback


def _fd_third_derivative_max(s: TestFunction, region: Mask, max_samples: int = 512) -> float:
    h = region.grid.h
    centers = region.true_centers()
    if len(centers) > max_samples:
        step = len(centers) // max_samples
        centers = centers[::step]
    best = 0.0
    d = region.grid.d
    for ax in range(d):
        e = np.zeros(d)
        e[ax] = h
        vals = (
            s(centers + 2 * e) - 2 * s(centers + e) + 2 * s(centers - e) - s(centers - 2 * e)
        ) / (2 * h**3)
        best = max(best, float(np.max(np.abs(vals))))
    return best / 6.0


def mean_value_max_excess(s: TestFunction, m: Mask) -> float:
    """Largest value of (axis-neighbor average minus center) over interior
    true cells; nonpositive up to fourth-order slack for superharmonic
    functions."""
    grid = m.grid
    vals = s(grid.all_centers()).reshape(grid.shape)
    core = tuple(slice(1, -1) for _ in range(grid.d))
    acc = np.zeros_like(vals[core])
    for ax in range(grid.d):
        for off in (-1, 1):
            sl = []
            for a in range(grid.d):
                if a == ax:
                    sl.append(slice(1 + off, vals.shape[a] - 1 + off))
                else:
                    sl.append(slice(1, -1))
            acc += vals[tuple(sl)]
    excess = acc / (2 * grid.d) - vals[core]
    inner = m.cells[core]
    if not inner.any():
        return 0.0
    return float(np.max(excess[inner]))
