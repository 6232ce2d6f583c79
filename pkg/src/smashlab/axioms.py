"""Executable checks of the sum-of-sets requirements on grid scenes.

Each check computes one or more smash sums and compares masks.  Grid
symmetries (commutation, integer-cell translation, cubic isometries about a
cell center) must hold with exactly zero discrepant cells; analytic facts
(mass conservation, monotonicity, the inflation inclusion, associativity,
the diameter bound) hold up to a boundary-layer cell tolerance that shrinks
under grid refinement.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .fileio import Scene, write_csv_rows, write_mask_pgm
from .geometry import (
    Ball,
    GridSpec,
    IsometryElem,
    IsometryImage,
    Mask,
    Translate,
    apply_isometry_about,
    boundary_cell_count,
    cubic_isometries,
    diameter_growth_bound,
    inflate,
    rasterize,
    translate_mask,
    working_grid,
)
from .sandpile import StabilizeParams, smash_sum_of_masks

__all__ = [
    "AxiomReport",
    "check_mass",
    "check_monotone",
    "check_commute",
    "check_associate",
    "check_translate",
    "check_isometry",
    "check_inflation_inclusion",
    "check_diameter",
    "run_axiom_suite",
    "ALL_CHECKS",
    "report_rows",
    "REPORT_HEADER",
]

# Fast, validated acceleration for suite runs (see sandpile.abelian_check).
SUITE_PARAMS = StabilizeParams(order="forward", kappa="auto")


@dataclass
class AxiomReport:
    """Outcome of one named check on one scene and grid."""

    name: str
    scene: str
    h: float
    discrepancy_cells: int
    discrepancy_measure: float
    tol_cells: float
    passed: bool
    runtime_s: float
    detail: dict = field(default_factory=dict)
    diff_mask: Mask | None = None

    def __post_init__(self):
        if self.discrepancy_cells < 0:
            raise ConfigError("discrepancy must be nonnegative")


def _scene_grid(scene: Scene, h: float, extra: float = 0.0) -> GridSpec:
    return working_grid(scene.shapes(), h, extra=extra)


def _tol_cells(*masks: Mask) -> int:
    return int(math.ceil(3 * sum(boundary_cell_count(m) for m in masks)))


def _report(name, scene, h, cells, tol, t0, detail=None, diff=None, extra_pass=True):
    cells = int(cells)
    return AxiomReport(
        name=name,
        scene=scene,
        h=h,
        discrepancy_cells=cells,
        discrepancy_measure=cells * h ** (diff.grid.d if diff is not None else 2),
        tol_cells=tol,
        passed=(cells <= tol) and extra_pass,
        runtime_s=time.time() - t0,
        detail=detail or {},
        diff_mask=diff,
    )


def check_mass(scene: Scene, h: float, params=SUITE_PARAMS) -> AxiomReport:
    """Measure of the sum equals the sum of measures, up to boundary cells."""
    t0 = time.time()
    grid = _scene_grid(scene, h)
    a = rasterize(scene.a, grid)
    b = rasterize(scene.b, grid)
    res = smash_sum_of_masks(a, b, params)
    gap = abs(res.domain.measure - a.measure - b.measure)
    cells = int(round(gap / grid.cell_volume))
    tol = boundary_cell_count(a) + boundary_cell_count(b) + boundary_cell_count(res.domain)
    detail = {"sum_measure": res.domain.measure, "a+b": a.measure + b.measure}
    rep = _report("mass", scene.name, h, cells, tol, t0, detail, res.domain.symmetric_difference(res.domain))
    rep.discrepancy_measure = gap
    return rep


def check_monotone(scene: Scene, h: float, params=SUITE_PARAMS) -> AxiomReport:
    """If A is contained in B then A+C stays inside B+C; A stays inside A+B.

    Uses A and an enlarged copy of A as the nested pair, with the scene's B
    in the third slot.
    """
    t0 = time.time()
    small = scene.a
    if isinstance(small, Ball):
        big = Ball(small.center, small.radius * 1.3)
    else:
        lo, hi = small.bbox()
        c, half = (lo + hi) / 2, (hi - lo) / 2
        big = Ball(tuple(c.tolist()), float(np.linalg.norm(half)) * 1.2)
    grid = working_grid([small, big, scene.b], h)
    ma, mbig, mc = (rasterize(s, grid) for s in (small, big, scene.b))
    sum_ac = smash_sum_of_masks(ma, mc, params).domain
    sum_bc = smash_sum_of_masks(mbig, mc, params).domain
    outside = sum_ac.difference(sum_bc)
    sum_ab = smash_sum_of_masks(ma, mbig, params).domain
    grow_violation = ma.difference(sum_ab).count
    tol = _tol_cells(ma, mbig, mc)
    rep = _report(
        "monotone",
        scene.name,
        h,
        outside.count,
        tol,
        t0,
        {"a_outside_sum_cells": grow_violation},
        outside,
        extra_pass=(grow_violation == 0),
    )
    return rep


def check_commute(scene: Scene, h: float, params=SUITE_PARAMS) -> AxiomReport:
    """A+B and B+A produce bitwise-identical domains (the weight field is
    symmetric by construction)."""
    t0 = time.time()
    grid = _scene_grid(scene, h)
    a = rasterize(scene.a, grid)
    b = rasterize(scene.b, grid)
    d1 = smash_sum_of_masks(a, b, params).domain
    d2 = smash_sum_of_masks(b, a, params).domain
    diff = d1.symmetric_difference(d2)
    return _report("commute", scene.name, h, diff.count, 0, t0, {}, diff)


def check_associate(scene: Scene, h: float, params=SUITE_PARAMS) -> AxiomReport:
    """(A+B)+C against A+(B+C); the intermediate domain mask is reused as an
    indicator weight.  Tolerance is the boundary rule over all operands."""
    if scene.c is None:
        raise ConfigError(f"scene {scene.name} has no C shape for associativity")
    t0 = time.time()
    grid = _scene_grid(scene, h)
    a, b, c = (rasterize(s, grid) for s in (scene.a, scene.b, scene.c))
    ab = smash_sum_of_masks(a, b, params).domain
    bc = smash_sum_of_masks(b, c, params).domain
    left = smash_sum_of_masks(ab, c, params).domain
    right = smash_sum_of_masks(a, bc, params).domain
    diff = left.symmetric_difference(right)
    tol = _tol_cells(a, b, c, ab, bc)
    return _report("associate", scene.name, h, diff.count, tol, t0, {}, diff)


def check_translate(scene: Scene, h: float, vcells=(3, 5, 2), params=SUITE_PARAMS) -> AxiomReport:
    """Integer-cell translation commutes with the sum, bitwise."""
    t0 = time.time()
    d = scene.d
    v = tuple(int(x) for x in vcells[:d])
    shift = tuple(x * h for x in v)
    ta = Translate(shift, scene.a)
    tb = Translate(shift, scene.b)
    grid = working_grid([scene.a, scene.b, ta, tb], h)
    a, b = rasterize(scene.a, grid), rasterize(scene.b, grid)
    base = smash_sum_of_masks(a, b, params).domain
    moved = translate_mask(base, v)
    direct = smash_sum_of_masks(rasterize(ta, grid), rasterize(tb, grid), params).domain
    diff = moved.symmetric_difference(direct)
    return _report("translate", scene.name, h, diff.count, 0, t0, {"vcells": v}, diff)


def check_isometry(scene: Scene, h: float, u: IsometryElem | None = None, params=SUITE_PARAMS) -> AxiomReport:
    """A cubic isometry about the (cell-center) box center commutes with the
    sum, bitwise."""
    t0 = time.time()
    grid = _scene_grid(scene, h)
    if u is None:
        group = cubic_isometries(scene.d)
        u = group[1] if len(group) > 1 else group[0]
    center = tuple(grid.centers_of(np.array([[n // 2 for n in grid.shape]]))[0].tolist())
    a, b = rasterize(scene.a, grid), rasterize(scene.b, grid)
    base = smash_sum_of_masks(a, b, params).domain
    moved = apply_isometry_about(base, u, center)
    ua = apply_isometry_about(a, u, center)
    ub = apply_isometry_about(b, u, center)
    direct = smash_sum_of_masks(ua, ub, params).domain
    diff = moved.symmetric_difference(direct)
    detail = {"perm": u.perm, "signs": u.signs}
    return _report("isometry", scene.name, h, diff.count, 0, t0, detail, diff)


def check_inflation_inclusion(scene: Scene, h: float, eps: float = 0.25, params=SUITE_PARAMS) -> AxiomReport:
    """The eps-inflation of A+B is contained in the sum of the eps-inflations."""
    t0 = time.time()
    grid = _scene_grid(scene, h, extra=eps + 8 * h)
    a, b = rasterize(scene.a, grid), rasterize(scene.b, grid)
    base = smash_sum_of_masks(a, b, params).domain
    left = inflate(base, eps)
    right = smash_sum_of_masks(inflate(a, eps), inflate(b, eps), params).domain
    outside = left.difference(right)
    tol = _tol_cells(a, b, left)
    return _report("inflation_inclusion", scene.name, h, outside.count, tol, t0, {"eps": eps}, outside)


def check_diameter(d: int, h: float, r: float = 1.0, params=SUITE_PARAMS) -> AxiomReport:
    """The sum of two coincident r-balls stays inside the N*r ball and its
    measured outer radius sits near ``2**(1/d) * r``."""
    t0 = time.time()
    ball = Ball((0.0,) * d, r)
    grid = working_grid([ball, ball], h)
    m = rasterize(ball, grid)
    res = smash_sum_of_masks(m, m, params)
    centers = res.domain.true_centers()
    outer = float(np.max(np.linalg.norm(centers, axis=1))) + 0.5 * h
    bound = diameter_growth_bound(d) * r
    expect = 2.0 ** (1.0 / d) * r
    cells_out = int(np.count_nonzero(np.linalg.norm(centers, axis=1) >= bound))
    detail = {
        "outer_radius": outer,
        "expected_radius": expect,
        "radius_rel_err": abs(outer - expect) / expect,
        "bound_radius": bound,
    }
    rep = _report(f"diameter_d{d}", f"B_{r}+B_{r}", h, cells_out, 0, t0, detail)
    rep.passed = cells_out == 0 and detail["radius_rel_err"] <= 0.03
    return rep


ALL_CHECKS = {
    "mass": check_mass,
    "monotone": check_monotone,
    "commute": check_commute,
    "associate": check_associate,
    "translate": check_translate,
    "isometry": check_isometry,
    "inflation_inclusion": check_inflation_inclusion,
}

REPORT_HEADER = [
    "check",
    "scene",
    "h",
    "discrepancy_cells",
    "discrepancy_measure",
    "tol_cells",
    "passed",
]


def report_rows(reports):
    """Stable CSV rows (sorted; runtime deliberately excluded)."""
    rows = []
    for r in sorted(reports, key=lambda r: (r.name, r.scene, -r.h)):
        rows.append(
            [r.name, r.scene, repr(r.h), r.discrepancy_cells, r.discrepancy_measure, r.tol_cells, int(r.passed)]
        )
    return rows


def run_axiom_suite(
    scenes,
    h_values,
    checks=None,
    params=SUITE_PARAMS,
    out_dir=None,
    max_workers=None,
):
    """Run the selected checks over scenes x grids.

    Returns the report list sorted deterministically.  With ``out_dir`` set,
    writes ``axioms.csv`` and one difference PGM per failing check.  Thread
    count honors ``SMASHLAB_THREADS`` (default 1).
    """
    checks = list(checks or ALL_CHECKS)
    bad = [c for c in checks if c not in ALL_CHECKS]
    if bad:
        raise ConfigError(f"unknown checks: {bad}; known: {sorted(ALL_CHECKS)}")
    jobs = []
    for scene in scenes:
        for h in h_values:
            for name in checks:
                if name == "associate" and scene.c is None:
                    continue
                jobs.append((name, scene, h))
    if max_workers is None:
        max_workers = int(os.environ.get("SMASHLAB_THREADS", "1"))
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            reports = list(pool.map(lambda j: ALL_CHECKS[j[0]](j[1], j[2], params=params), jobs))
    else:
        reports = [ALL_CHECKS[name](scene, h, params=params) for name, scene, h in jobs]
    reports.sort(key=lambda r: (r.name, r.scene, -r.h))
    if out_dir is not None:
        write_csv_rows(f"{out_dir}/axioms.csv", REPORT_HEADER, report_rows(reports))
        for r in reports:
            if not r.passed and r.diff_mask is not None and r.diff_mask.grid.d == 2:
                write_mask_pgm(r.diff_mask, f"{out_dir}/diff_{r.name}_{r.scene}_h{r.h:.8g}.pgm")
    return reports
