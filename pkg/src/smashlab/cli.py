"""Command line entry point.

Commands: ``sum`` (compute a scene's A+B and write rasters), ``axioms``
(requirement checks), ``quadrature`` (superharmonic slack ledger), ``game``
(play the smash game), ``converge`` (rerun checks at refined grids and
report discrepancy ratios).

Exit codes: 0 pass, 1 check failure, 2 configuration error, 3 numerical
non-convergence.  Identical configurations produce byte-identical CSVs;
manifests differ only under their ``timing`` key.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import axioms as axioms_mod
from .errors import ConfigError, GridTooCoarseError, NonConvergenceError, SmashlabError
from .fileio import (
    Scene,
    load_scene,
    write_csv_rows,
    write_manifest,
    write_mask_pgm,
    write_sum_result,
)
from .geometry import working_grid
from .quadrature import builtin_suite, make_test_function, quadrature_slack, slack_tolerance
from .sandpile import field_from_shapes, smash_sum
from .scenes import STANDARD_SUITE, builtin_scene
from .smashgame import run_strategy


def _parse_h_list(text: str):
    out = []
    for part in text.split(","):
        part = part.strip()
        out.append(float(Fraction(part)) if "/" in part else float(part))
    if not out or any(h <= 0 for h in out):
        raise ConfigError("h values must be positive")
    if out != sorted(out, reverse=True) and len(out) > 1:
        raise ConfigError("h values must be decreasing")
    return out


def _load_scenes(spec: str):
    scenes = []
    for name in spec.split(","):
        name = name.strip()
        if name == "standard":
            scenes.extend(builtin_scene(s) for s in STANDARD_SUITE)
        elif Path(name).suffix == ".json" or "/" in name:
            scenes.append(load_scene(name))
        else:
            scenes.append(builtin_scene(name))
    return scenes


def _h_dirname(h: float) -> str:
    return f"h_{h:.10g}"


def cmd_sum(args) -> int:
    scenes = _load_scenes(args.scene)
    out = Path(args.out)
    for scene in scenes:
        for h in args.h:
            t0 = time.time()
            grid = working_grid(scene.shapes(), h)
            w = field_from_shapes([scene.a, scene.b], grid)
            try:
                res = smash_sum(w, axioms_mod.SUITE_PARAMS)
            except NonConvergenceError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 3
            sub = out / scene.name / _h_dirname(h)
            write_sum_result(
                sub,
                res,
                extra={"scene": scene.name, "h": h},
                runtime_s=time.time() - t0,
            )
            print(f"{scene.name} h={h:g}: measure {res.domain.measure:.6f}, sweeps {res.sweeps}")
    return 0


def cmd_axioms(args) -> int:
    scene_spec, h_values, checks = args.scene, args.h, args.checks
    if args.config:
        cfg = json.loads(Path(args.config).read_text())
        scene_spec = ",".join(cfg.get("scenes", [scene_spec]))
        if "h" in cfg:
            h_values = [float(Fraction(str(x))) for x in cfg["h"]]
        checks = ",".join(cfg["checks"]) if "checks" in cfg else checks
    scenes = _load_scenes(scene_spec)
    checks = checks.split(",") if checks else None
    reports = axioms_mod.run_axiom_suite(scenes, h_values, checks=checks, out_dir=args.out)
    failed = [r for r in reports if not r.passed]
    for r in reports:
        mark = "PASS" if r.passed else "FAIL"
        print(f"{mark} {r.name:22s} {r.scene:14s} h={r.h:<10g} cells={r.discrepancy_cells} tol={r.tol_cells}")
    return 1 if failed else 0


def cmd_quadrature(args) -> int:
    scenes = _load_scenes(args.scene)
    rows = []
    all_pass = True
    for scene in scenes:
        for h in args.h:
            grid = working_grid(scene.shapes(), h)
            w = field_from_shapes([scene.a, scene.b], grid)
            res = smash_sum(w, axioms_mod.SUITE_PARAMS)
            if args.s_fn:
                fns = [make_test_function(json.loads(args.s_fn), grid.d)]
            else:
                fns = builtin_suite(grid)
            for s in fns:
                slack = quadrature_slack(res.domain, w, s)
                tol = slack_tolerance(s, res.domain)
                ok = slack >= -tol
                all_pass &= ok
                rows.append([scene.name, repr(h), s.id_string, slack, tol, int(ok)])
    if args.out:
        write_csv_rows(
            Path(args.out) / "quadrature.csv",
            ["scene", "h", "function", "slack", "tolerance", "passed"],
            rows,
        )
    for row in rows:
        mark = "PASS" if row[5] else "FAIL"
        print(f"{mark} {row[0]:14s} h={row[1]:<12s} {row[2]:40s} slack={row[3]:.3e}")
    return 0 if all_pass else 1


def cmd_game(args) -> int:
    cfg = {}
    if args.config:
        cfg = json.loads(Path(args.config).read_text())
    scene_src = args.scene or cfg.get("scene")
    if scene_src is None:
        raise ConfigError("game needs a scene (flag or config)")
    scene = _load_scenes(scene_src)[0] if isinstance(scene_src, str) else load_scene(scene_src)
    h = args.h[0] if args.h else cfg.get("h", 1 / 64)
    eps = args.eps if args.eps is not None else cfg.get("eps", 0.05)
    delta = args.delta if args.delta is not None else cfg.get("delta")
    s_cfg = json.loads(args.s_fn) if args.s_fn else cfg.get("s_fn", {"id": "neg_square", "center": [0.0] * scene.d})
    s = make_test_function(s_cfg, scene.d)
    out = Path(args.out)
    t0 = time.time()
    res = run_strategy(
        scene.a,
        scene.b,
        s,
        eps=eps,
        delta=delta,
        h=h,
        snapshot_dir=out if args.snapshots else None,
    )
    header = [
        "n", "R", "hand_mass_start", "ball_mass", "n_balls", "n_singles",
        "d_sigma_smash", "d_sigma_shrink", "d_mass_deposit", "d_s_integral",
        "round_moment_lhs", "round_moment_rhs", "hand_mass_end", "mass_end",
        "s_integral_end", "sigma_end", "min_smash_margin",
    ]
    rows = [
        [r.n, r.R, r.hand_mass_start, r.ball_mass, r.n_balls, r.n_singles,
         r.d_sigma_smash, r.d_sigma_shrink, r.d_mass_deposit, r.d_s_integral,
         r.round_moment_lhs, r.round_moment_rhs, r.hand_mass_end, r.mass_end,
         r.s_integral_end, r.sigma_end, r.min_smash_margin]
        for r in res.round_records
        if hasattr(r, "round_moment_lhs")
    ]
    write_csv_rows(out / "rounds.csv", header, rows)
    write_mask_pgm(res.table, out / "table.pgm")
    write_manifest(
        out / "manifest.json",
        {
            "status": res.status,
            "rounds": res.rounds,
            "final_hand_mass": res.final_hand_mass,
            "mass_loss": res.mass_loss,
            "s_increase": res.s_increase,
            "params": {k: (float(v) if isinstance(v, (int, float, np.floating)) else v) for k, v in res.params.items()},
        },
        runtime_s=time.time() - t0,
    )
    print(f"game: {res.status} after {res.rounds} rounds; hand {res.final_hand_mass:.5f}")
    return 0 if res.status == "WON" else 1


def cmd_converge(args) -> int:
    scenes = _load_scenes(args.scene)
    checks = args.checks.split(",") if args.checks else ["associate"]
    if len(args.h) < 2:
        raise ConfigError("converge needs at least two h values")
    reports = axioms_mod.run_axiom_suite(scenes, args.h, checks=checks, out_dir=None)
    by_key = {}
    for r in reports:
        by_key.setdefault((r.name, r.scene), []).append(r)
    rows = []
    all_pass = True
    for (name, scene), reps in sorted(by_key.items()):
        reps.sort(key=lambda r: -r.h)
        prev = None
        for r in reps:
            ratio = ""
            if prev is not None:
                ratio = r.discrepancy_measure / prev.discrepancy_measure if prev.discrepancy_measure > 0 else 0.0
            rows.append([name, scene, repr(r.h), r.discrepancy_cells, r.discrepancy_measure, ratio, int(r.passed)])
            all_pass &= r.passed
            prev = r
    if args.out:
        write_csv_rows(
            Path(args.out) / "converge.csv",
            ["check", "scene", "h", "discrepancy_cells", "discrepancy_measure", "ratio", "passed"],
            rows,
        )
    for row in rows:
        print(f"{row[0]:14s} {row[1]:14s} h={row[2]:<12s} cells={row[3]:<6} ratio={row[5] if row[5] != '' else '-'}")
    return 0 if all_pass else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smashlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scene_default=None):
        sp.add_argument("--scene", default=scene_default, help="builtin name(s), 'standard', or scene JSON path")
        sp.add_argument("--h", type=_parse_h_list, default=[1 / 64], help="cell widths, e.g. 1/32,1/64")
        sp.add_argument("--out", default="out", help="output directory")

    sp = sub.add_parser("sum", help="compute A+B and write rasters")
    common(sp, "standard")
    sp.set_defaults(fn=cmd_sum)

    sp = sub.add_parser("axioms", help="run requirement checks")
    common(sp, "standard")
    sp.add_argument("--checks", default=None, help="comma list; default all")
    sp.add_argument("--config", default=None, help="suite config JSON (scenes, h, checks)")
    sp.set_defaults(fn=cmd_axioms)

    sp = sub.add_parser("quadrature", help="superharmonic slack ledger")
    common(sp, "standard")
    sp.add_argument("--s-fn", default=None, help="JSON test-function spec (default: builtin battery)")
    sp.set_defaults(fn=cmd_quadrature)

    sp = sub.add_parser("game", help="play the smash game")
    common(sp, None)
    sp.add_argument("--config", default=None, help="game config JSON")
    sp.add_argument("--eps", type=float, default=None)
    sp.add_argument("--delta", type=float, default=None)
    sp.add_argument("--s-fn", default=None, help="JSON test-function spec")
    sp.add_argument("--snapshots", action="store_true", help="write per-round table rasters")
    sp.set_defaults(fn=cmd_game)

    sp = sub.add_parser("converge", help="checks at refined grids with ratios")
    common(sp, "standard")
    sp.add_argument("--checks", default="associate")
    sp.set_defaults(fn=cmd_converge)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, GridTooCoarseError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NonConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return 3
    except SmashlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
