"""Shape algebra, uniform grids, boolean masks, and the cubic isometry group.

Shapes are symbolic trees whose leaves are open balls and open boxes and whose
internal nodes are boolean combinations and rigid motions.  Every realized set
is bounded and open and its boundary (finitely many spheres and hyperplanes)
is Lebesgue-null.  A ``Mask`` is the rasterization of such a set on a uniform
grid: a cell is true iff its center lies in the set.  Measure is cell count
times ``h**d``; all downstream integrals use the same cell-center rule so mask
identities transfer to integral identities exactly.

Dilation (``inflate``) and erosion (``deflate``) realize the open
epsilon-neighborhood and epsilon-interior of a set at grid scale.  The group
``H`` of signed coordinate permutations (the isometries fixing the cube) acts
exactly on masks when conjugated about a cell center, because integer index
offsets map to integer index offsets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations, product

import numpy as np
from scipy import ndimage

from .errors import ConfigError, GridMismatchError, OutOfBoxError

__all__ = [
    "Ball",
    "Box",
    "Union",
    "Intersection",
    "Difference",
    "Translate",
    "IsometryImage",
    "GridSpec",
    "Mask",
    "IsometryElem",
    "parse_shape",
    "shape_to_obj",
    "rasterize",
    "measure",
    "inflate",
    "deflate",
    "translate_mask",
    "boundary_cell_count",
    "default_tol_cells",
    "essentially_equal",
    "essentially_contained",
    "cubic_isometries",
    "apply_isometry_about",
    "ball_cells",
    "cookie_cutter",
    "diameter_growth_bound",
    "working_grid",
]


# ---------------------------------------------------------------------------
# Symbolic shapes


def _as_point(p) -> np.ndarray:
    a = np.asarray(p, dtype=float)
    if a.ndim != 1:
        raise ConfigError(f"expected a point, got array of shape {a.shape}")
    return a


@dataclass(frozen=True)
class Ball:
    """Open Euclidean ball."""

    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0:
            raise ConfigError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, pts: np.ndarray, closed: bool = False) -> np.ndarray:
        d2 = np.sum((pts - np.asarray(self.center)) ** 2, axis=1)
        r2 = self.radius * self.radius
        return d2 <= r2 if closed else d2 < r2

    def bbox(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class Box:
    """Open axis-aligned box."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(c) for c in self.lo))
        object.__setattr__(self, "hi", tuple(float(c) for c in self.hi))
        if len(self.lo) != len(self.hi):
            raise ConfigError("box lo/hi dimension mismatch")
        if not all(a < b for a, b in zip(self.lo, self.hi)):
            raise ConfigError("box must have nonempty interior (lo < hi)")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, pts: np.ndarray, closed: bool = False) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        if closed:
            return np.all((pts >= lo) & (pts <= hi), axis=1)
        return np.all((pts > lo) & (pts < hi), axis=1)

    def bbox(self):
        return np.asarray(self.lo), np.asarray(self.hi)


@dataclass(frozen=True)
class Union:
    parts: tuple

    def __post_init__(self):
        if not self.parts:
            raise ConfigError("union needs at least one part")
        object.__setattr__(self, "parts", tuple(self.parts))

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    def contains(self, pts, closed=False):
        out = self.parts[0].contains(pts, closed)
        for p in self.parts[1:]:
            out = out | p.contains(pts, closed)
        return out

    def bbox(self):
        los, his = zip(*(p.bbox() for p in self.parts))
        return np.min(los, axis=0), np.max(his, axis=0)


@dataclass(frozen=True)
class Intersection:
    parts: tuple

    def __post_init__(self):
        if not self.parts:
            raise ConfigError("intersection needs at least one part")
        object.__setattr__(self, "parts", tuple(self.parts))

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    def contains(self, pts, closed=False):
        out = self.parts[0].contains(pts, closed)
        for p in self.parts[1:]:
            out = out & p.contains(pts, closed)
        return out

    def bbox(self):
        los, his = zip(*(p.bbox() for p in self.parts))
        lo = np.max(los, axis=0)
        hi = np.min(his, axis=0)
        return lo, np.maximum(lo, hi)


@dataclass(frozen=True)
class Difference:
    """Set difference ``minuend \\ closure(subtrahend)`` (kept open)."""

    minuend: object
    subtrahend: object

    @property
    def dim(self) -> int:
        return self.minuend.dim

    def contains(self, pts, closed=False):
        if closed:
            # Over-approximation of the closure: closure(A \ cl B) is contained
            # in cl(A) minus the open interior of B.
            return self.minuend.contains(pts, True) & ~self.subtrahend.contains(pts, False)
        return self.minuend.contains(pts, False) & ~self.subtrahend.contains(pts, True)

    def bbox(self):
        return self.minuend.bbox()


@dataclass(frozen=True)
class Translate:
    by: tuple
    of: object

    def __post_init__(self):
        object.__setattr__(self, "by", tuple(float(c) for c in self.by))

    @property
    def dim(self) -> int:
        return len(self.by)

    def contains(self, pts, closed=False):
        return self.of.contains(pts - np.asarray(self.by), closed)

    def bbox(self):
        lo, hi = self.of.bbox()
        v = np.asarray(self.by)
        return lo + v, hi + v


@dataclass(frozen=True)
class IsometryImage:
    """Image of a shape under a cubic isometry conjugated about a point.

    A point ``y`` lies in the image iff ``U^{-1}(y - about) + about`` lies in
    the child shape.
    """

    u: "IsometryElem"
    about: tuple
    of: object

    def __post_init__(self):
        object.__setattr__(self, "about", tuple(float(c) for c in self.about))

    @property
    def dim(self) -> int:
        return len(self.about)

    def contains(self, pts, closed=False):
        x = np.asarray(self.about)
        pre = self.u.inverse().apply(pts - x) + x
        return self.of.contains(pre, closed)

    def bbox(self):
        lo, hi = self.of.bbox()
        x = np.asarray(self.about)
        corners = np.array(list(product(*zip(lo, hi))), dtype=float)
        img = self.u.apply(corners - x) + x
        return img.min(axis=0), img.max(axis=0)


_PARSE_KEYS = ("ball", "box", "union", "intersect", "diff", "translate")


def parse_shape(obj) -> object:
    """Build a shape from its JSON object form.

    Node forms: ``{"ball": {"center": [...], "r": ...}}``,
    ``{"box": {"lo": [...], "hi": [...]}}``, ``{"union": [...]}``,
    ``{"intersect": [...]}``, ``{"diff": [a, b]}``, and
    ``{"translate": {"by": [...], "of": ...}}``.
    """
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ConfigError(f"shape node must be a single-key object, got {obj!r}")
    key, val = next(iter(obj.items()))
    if key == "ball":
        return Ball(tuple(val["center"]), float(val["r"]))
    if key == "box":
        return Box(tuple(val["lo"]), tuple(val["hi"]))
    if key == "union":
        return Union(tuple(parse_shape(v) for v in val))
    if key == "intersect":
        return Intersection(tuple(parse_shape(v) for v in val))
    if key == "diff":
        if len(val) != 2:
            raise ConfigError("diff takes exactly two children")
        return Difference(parse_shape(val[0]), parse_shape(val[1]))
    if key == "translate":
        return Translate(tuple(val["by"]), parse_shape(val["of"]))
    raise ConfigError(f"unknown shape node {key!r}; expected one of {_PARSE_KEYS}")


def shape_to_obj(shape) -> dict:
    """Inverse of :func:`parse_shape` for the documented node types."""
    if isinstance(shape, Ball):
        return {"ball": {"center": list(shape.center), "r": shape.radius}}
    if isinstance(shape, Box):
        return {"box": {"lo": list(shape.lo), "hi": list(shape.hi)}}
    if isinstance(shape, Union):
        return {"union": [shape_to_obj(p) for p in shape.parts]}
    if isinstance(shape, Intersection):
        return {"intersect": [shape_to_obj(p) for p in shape.parts]}
    if isinstance(shape, Difference):
        return {"diff": [shape_to_obj(shape.minuend), shape_to_obj(shape.subtrahend)]}
    if isinstance(shape, Translate):
        return {"translate": {"by": list(shape.by), "of": shape_to_obj(shape.of)}}
    raise ConfigError(f"shape {type(shape).__name__} has no JSON form")


# ---------------------------------------------------------------------------
# Grid and mask


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid over a box: cell centers at ``lo + (k + 1/2) h``."""

    h: float
    lo: tuple
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "lo", tuple(float(c) for c in self.lo))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if self.h <= 0:
            raise ConfigError("cell width h must be positive")
        if len(self.lo) != len(self.shape):
            raise ConfigError("grid lo/shape dimension mismatch")
        if any(n < 1 for n in self.shape):
            raise ConfigError("grid needs at least one cell per axis")
        if self.d not in (1, 2, 3):
            raise ConfigError("grids are supported in dimensions 1, 2, 3")

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.lo) + self.h * np.asarray(self.shape)

    @property
    def ncells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.lo[axis] + (np.arange(self.shape[axis]) + 0.5) * self.h

    def all_centers(self) -> np.ndarray:
        """All cell centers, shape ``(ncells, d)``, in C (row-major) order."""
        axes = [self.axis_centers(k) for k in range(self.d)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def centers_of(self, indices: np.ndarray) -> np.ndarray:
        idx = np.atleast_2d(np.asarray(indices))
        return np.asarray(self.lo) + (idx + 0.5) * self.h

    def index_of(self, point, tol: float = 1e-6):
        """Index of the cell whose center is ``point``.

        Raises if the point is not a cell center to within ``tol * h`` or is
        outside the box.
        """
        p = _as_point(point)
        k = np.rint((p - np.asarray(self.lo)) / self.h - 0.5).astype(int)
        if np.any(k < 0) or np.any(k >= np.asarray(self.shape)):
            raise OutOfBoxError(f"point {p.tolist()} is outside the grid box")
        c = self.centers_of(k[None, :])[0]
        if np.max(np.abs(c - p)) > tol * self.h:
            raise ConfigError(f"point {p.tolist()} is not a cell center")
        return tuple(int(v) for v in k)

    def same_as(self, other: "GridSpec", tol: float = 1e-12) -> bool:
        return (
            self.shape == other.shape
            and abs(self.h - other.h) <= tol * self.h
            and all(abs(a - b) <= tol * max(1.0, abs(a)) for a, b in zip(self.lo, other.lo))
        )


def _check_same_grid(a, b):
    if not a.grid.same_as(b.grid):
        raise GridMismatchError("operands live on different grids")


@dataclass(frozen=True)
class Mask:
    """Boolean occupancy per cell of a grid.  Immutable after construction."""

    grid: GridSpec
    cells: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.cells, dtype=bool)
        if arr.shape != self.grid.shape:
            raise GridMismatchError("mask array shape does not match grid")
        arr.setflags(write=False)
        object.__setattr__(self, "cells", arr)

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.cells))

    @property
    def measure(self) -> float:
        return self.count * self.grid.cell_volume

    def indices(self) -> np.ndarray:
        return np.argwhere(self.cells)

    def true_centers(self) -> np.ndarray:
        return self.grid.centers_of(self.indices())

    def union(self, other: "Mask") -> "Mask":
        _check_same_grid(self, other)
        return Mask(self.grid, self.cells | other.cells)

    def intersection(self, other: "Mask") -> "Mask":
        _check_same_grid(self, other)
        return Mask(self.grid, self.cells & other.cells)

    def difference(self, other: "Mask") -> "Mask":
        _check_same_grid(self, other)
        return Mask(self.grid, self.cells & ~other.cells)

    def symmetric_difference(self, other: "Mask") -> "Mask":
        _check_same_grid(self, other)
        return Mask(self.grid, self.cells ^ other.cells)

    def is_subset(self, other: "Mask") -> bool:
        _check_same_grid(self, other)
        return not np.any(self.cells & ~other.cells)

    def centroid(self) -> np.ndarray:
        if self.count == 0:
            raise ConfigError("centroid of an empty mask")
        return self.true_centers().mean(axis=0)


def empty_mask(grid: GridSpec) -> Mask:
    return Mask(grid, np.zeros(grid.shape, dtype=bool))


def full_mask(grid: GridSpec) -> Mask:
    return Mask(grid, np.ones(grid.shape, dtype=bool))


def rasterize(shape, grid: GridSpec) -> Mask:
    """Sample a shape at every cell center.

    The shape's bounding box must fit inside the grid box; the error names the
    axis and side of any overflow.
    """
    lo, hi = shape.bbox()
    glo = np.asarray(grid.lo)
    ghi = grid.hi
    slack = 1e-9 * max(1.0, float(np.max(np.abs(ghi - glo))))
    for ax in range(grid.d):
        if lo[ax] < glo[ax] - slack:
            raise OutOfBoxError(
                f"shape exceeds grid box on axis {ax} (lower side) by {glo[ax] - lo[ax]:.6g}"
            )
        if hi[ax] > ghi[ax] + slack:
            raise OutOfBoxError(
                f"shape exceeds grid box on axis {ax} (upper side) by {hi[ax] - ghi[ax]:.6g}"
            )
    inside = shape.contains(grid.all_centers(), closed=False)
    return Mask(grid, inside.reshape(grid.shape))


def measure(m: Mask) -> float:
    """Lebesgue measure of a mask: cell count times ``h**d``."""
    return m.measure


# ---------------------------------------------------------------------------
# Morphology


def inflate(m: Mask, eps: float) -> Mask:
    """Open eps-neighborhood at grid scale.

    A cell is true iff the Euclidean distance from its center to some true
    cell center is at most ``eps`` (dilation by the closed discrete
    eps-ball, so ``eps = h`` adds the axis neighbors).  Errors if the
    dilation would claim centers outside the grid box (the caller must pad).
    """
    if eps < m.grid.h:
        raise ConfigError("inflate needs eps >= h")
    if m.count == 0:
        return m
    idx = m.indices()
    shape = np.asarray(m.grid.shape)
    margin = int(min(idx.min(axis=0).min(), (shape - 1 - idx.max(axis=0)).min()))
    if eps > (margin + 1) * m.grid.h * (1 - 1e-12):
        raise OutOfBoxError(
            "inflation would exceed the grid box; pad the grid "
            f"(margin {margin} cells, eps/h = {eps / m.grid.h:.3g})"
        )
    dist = ndimage.distance_transform_edt(~m.cells)
    return Mask(m.grid, dist * m.grid.h <= eps * (1 + 1e-12))


def deflate(m: Mask, eps: float) -> Mask:
    """Open eps-interior at grid scale.

    A cell is true iff every cell center within distance ``eps`` (including
    virtual centers beyond the box, which count as false) is true; that is,
    the distance to the complement exceeds ``eps``.
    """
    if eps <= 0:
        raise ConfigError("deflate needs eps > 0")
    if m.count == 0:
        return m
    padded = np.pad(m.cells, 1, constant_values=False)
    dist = ndimage.distance_transform_edt(padded)
    core = tuple(slice(1, -1) for _ in range(m.grid.d))
    return Mask(m.grid, dist[core] * m.grid.h > eps)


def translate_mask(m: Mask, vcells) -> Mask:
    """Shift a mask by an integer number of cells per axis (no wraparound)."""
    v = np.asarray(vcells, dtype=int)
    if v.shape != (m.grid.d,):
        raise ConfigError("translation vector dimension mismatch")
    if m.count == 0:
        return m
    idx = m.indices() + v
    if np.any(idx < 0) or np.any(idx >= np.asarray(m.grid.shape)):
        raise OutOfBoxError("translated mask escapes the grid box")
    out = np.zeros(m.grid.shape, dtype=bool)
    out[tuple(idx.T)] = True
    return Mask(m.grid, out)


def boundary_cell_count(m: Mask) -> int:
    """True cells with at least one axis neighbor false (outside counts false)."""
    c = m.cells
    if m.count == 0:
        return 0
    interior = np.ones(m.grid.shape, dtype=bool)
    for ax in range(m.grid.d):
        lo = np.roll(c, 1, axis=ax)
        hi = np.roll(c, -1, axis=ax)
        # roll wraps; boundary slices of the box must read as false neighbors
        sl_lo = [slice(None)] * m.grid.d
        sl_lo[ax] = 0
        lo[tuple(sl_lo)] = False
        sl_hi = [slice(None)] * m.grid.d
        sl_hi[ax] = -1
        hi[tuple(sl_hi)] = False
        interior &= lo & hi
    return int(np.count_nonzero(c & ~interior))


def default_tol_cells(*masks: Mask) -> int:
    """One-boundary-layer attribution: three times the largest boundary count."""
    return int(math.ceil(3 * max(boundary_cell_count(m) for m in masks)))


def essentially_equal(m1: Mask, m2: Mask, tol_cells=None) -> bool:
    """Equality up to ``tol_cells`` discrepant cells (default: boundary rule)."""
    _check_same_grid(m1, m2)
    if tol_cells is None:
        tol_cells = default_tol_cells(m1, m2)
    return int(np.count_nonzero(m1.cells ^ m2.cells)) <= tol_cells


def essentially_contained(m1: Mask, m2: Mask, tol_cells=None) -> bool:
    """Containment of ``m1`` in ``m2`` up to ``tol_cells`` cells."""
    _check_same_grid(m1, m2)
    if tol_cells is None:
        tol_cells = default_tol_cells(m1, m2)
    return int(np.count_nonzero(m1.cells & ~m2.cells)) <= tol_cells


# ---------------------------------------------------------------------------
# Cubic isometries


@dataclass(frozen=True)
class IsometryElem:
    """Signed coordinate permutation: ``(U y)_i = signs[i] * y[perm[i]]``."""

    perm: tuple
    signs: tuple

    def __post_init__(self):
        object.__setattr__(self, "perm", tuple(int(p) for p in self.perm))
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
        d = len(self.perm)
        if sorted(self.perm) != list(range(d)):
            raise ConfigError("perm must be a permutation of 0..d-1")
        if len(self.signs) != d or any(s not in (-1, 1) for s in self.signs):
            raise ConfigError("signs must be +1/-1 per axis")

    @property
    def dim(self) -> int:
        return len(self.perm)

    @property
    def is_identity(self) -> bool:
        return self.perm == tuple(range(self.dim)) and all(s == 1 for s in self.signs)

    def apply(self, pts: np.ndarray) -> np.ndarray:
        a = np.atleast_2d(np.asarray(pts, dtype=float))
        out = a[:, list(self.perm)] * np.asarray(self.signs, dtype=float)
        return out if np.asarray(pts).ndim > 1 else out[0]

    def apply_int(self, offsets: np.ndarray) -> np.ndarray:
        o = np.atleast_2d(np.asarray(offsets))
        return o[:, list(self.perm)] * np.asarray(self.signs)

    def compose(self, other: "IsometryElem") -> "IsometryElem":
        """Composition ``self o other`` (apply ``other`` first)."""
        perm = tuple(other.perm[self.perm[i]] for i in range(self.dim))
        signs = tuple(self.signs[i] * other.signs[self.perm[i]] for i in range(self.dim))
        return IsometryElem(perm, signs)

    def inverse(self) -> "IsometryElem":
        perm = [0] * self.dim
        signs = [0] * self.dim
        for i in range(self.dim):
            perm[self.perm[i]] = i
            signs[self.perm[i]] = self.signs[i]
        return IsometryElem(tuple(perm), tuple(signs))

    def matrix(self) -> np.ndarray:
        m = np.zeros((self.dim, self.dim))
        for i in range(self.dim):
            m[i, self.perm[i]] = self.signs[i]
        return m


@lru_cache(maxsize=None)
def cubic_isometries(d: int) -> tuple:
    """All ``2**d * d!`` signed coordinate permutations, identity first."""
    if d not in (1, 2, 3):
        raise ConfigError("cubic isometries supported for d in {1, 2, 3}")
    elems = [
        IsometryElem(perm, signs)
        for perm in permutations(range(d))
        for signs in product((1, -1), repeat=d)
    ]
    elems.sort(key=lambda u: (u.perm, u.signs), reverse=False)
    elems.sort(key=lambda u: not u.is_identity)
    return tuple(elems)


def apply_isometry_about(m: Mask, u: IsometryElem, x) -> Mask:
    """Image of a mask under ``y -> U(y - x) + x`` for a cell center ``x``.

    Cell centers map exactly to cell centers, so the image is another mask
    with the same cell count.  Errors if any image index leaves the box.
    """
    kx = np.asarray(m.grid.index_of(x))
    if u.is_identity or m.count == 0:
        return m
    idx = m.indices()
    new_idx = kx + u.apply_int(idx - kx)
    if np.any(new_idx < 0) or np.any(new_idx >= np.asarray(m.grid.shape)):
        raise OutOfBoxError("isometry image escapes the grid box")
    out = np.zeros(m.grid.shape, dtype=bool)
    out[tuple(new_idx.T)] = True
    return Mask(m.grid, out)


@lru_cache(maxsize=512)
def _ball_offsets_window(d: int, r_over_h: float) -> np.ndarray:
    """Window bool array of integer offsets with squared norm < (r/h)**2."""
    if r_over_h == float(int(r_over_h)):
        w = max(0, int(r_over_h) - 1)  # strict inequality misses the last ring
    else:
        w = int(math.floor(r_over_h))
    rng = np.arange(-w, w + 1)
    grids = np.meshgrid(*([rng] * d), indexing="ij")
    q = sum(g.astype(np.int64) ** 2 for g in grids)
    return q < r_over_h * r_over_h


def ball_cells(grid: GridSpec, center_idx, r: float) -> np.ndarray:
    """Bool array of the ball of radius ``r`` about a cell center, by index.

    Membership is decided on exact integer offsets (``i^2 + j^2 < (r/h)^2``),
    which keeps ball masks reproducible across construction paths.
    """
    k = np.asarray(center_idx, dtype=int)
    win = _ball_offsets_window(grid.d, r / grid.h)
    w = (win.shape[0] - 1) // 2
    if np.any(k - w < 0) or np.any(k + w >= np.asarray(grid.shape)):
        raise OutOfBoxError("ball window escapes the grid box")
    out = np.zeros(grid.shape, dtype=bool)
    sl = tuple(slice(int(ki - w), int(ki + w + 1)) for ki in k)
    out[sl] = win
    return out


def _transform_window(win: np.ndarray, u: IsometryElem) -> np.ndarray:
    """Apply a signed permutation to a centered odd-sized window, exactly."""
    if u.is_identity:
        return win
    c = (np.asarray(win.shape) - 1) // 2
    idx = np.argwhere(win)
    new_idx = c + u.apply_int(idx - c)
    out = np.zeros_like(win)
    if len(new_idx):
        out[tuple(new_idx.T)] = True
    return out


def cookie_cutter(x, R: float, table: Mask) -> Mask:
    """Cubically symmetric stamp: ball of radius ``R`` about ``x`` intersected
    with every signed-permutation image of the set about ``x``.

    ``x`` must be a cell center inside the set and the ball window must fit in
    the box.  The result is contained in the set and is exactly invariant
    under the group action about ``x`` (window alignment makes the action an
    index permutation).
    """
    grid = table.grid
    kx = np.asarray(grid.index_of(x))
    if not table.cells[tuple(kx)]:
        raise ConfigError("cookie cutter center must lie inside the set")
    ball_win = _ball_offsets_window(grid.d, R / grid.h)
    w = (ball_win.shape[0] - 1) // 2
    if np.any(kx - w < 0) or np.any(kx + w >= np.asarray(grid.shape)):
        raise OutOfBoxError("cookie cutter ball does not fit in the grid box")
    sl = tuple(slice(int(k - w), int(k + w + 1)) for k in kx)
    a_win = table.cells[sl]
    acc = ball_win & a_win
    if not a_win.all():
        for u in cubic_isometries(grid.d):
            if u.is_identity:
                continue
            acc &= _transform_window(a_win, u)
            if not acc.any():
                break
    out = np.zeros(grid.shape, dtype=bool)
    out[sl] = acc
    return Mask(grid, out)


# ---------------------------------------------------------------------------
# Sizing


def diameter_growth_bound(d: int) -> float:
    """Constant ``N`` with the sum of two r-balls contained in ``B_{N r}``."""
    return 2.0 / ((9.0 / 8.0) ** (1.0 / d) - 1.0)


def working_grid(shapes, h: float, extra: float = 0.0, center=None) -> GridSpec:
    """Cubic grid sized to contain pairwise sums of the given shapes.

    The half-width is ``2**(1/d)`` times the circumradius of the shapes' joint
    bounding box (the concentric growth law for the computed sum) plus
    ``extra`` plus a four-cell pad.  The box center is a cell center and the
    per-axis cell count is odd, so isometries about the center act exactly.
    """
    shapes = list(shapes)
    if not shapes:
        raise ConfigError("working_grid needs at least one shape")
    d = shapes[0].dim
    los, his = zip(*(s.bbox() for s in shapes))
    lo = np.min(los, axis=0)
    hi = np.max(his, axis=0)
    c = np.asarray(center, dtype=float) if center is not None else (lo + hi) / 2.0
    r0 = 0.0
    for slo, shi in zip(los, his):
        corners = np.array(list(product(*zip(slo, shi))), dtype=float)
        r0 = max(r0, float(np.max(np.linalg.norm(corners - c, axis=1))))
    half = 2.0 ** (1.0 / d) * r0 + extra + 4 * h
    n = max(2, int(math.ceil(half / h)))
    glo = c - (n + 0.5) * h
    return GridSpec(h, tuple(glo.tolist()), (2 * n + 1,) * d)
