"""Requirement checks on the built-in scenes."""

import numpy as np
import pytest

from smashlab.axioms import (
    check_associate,
    check_commute,
    check_diameter,
    check_inflation_inclusion,
    check_isometry,
    check_mass,
    check_monotone,
    check_translate,
    run_axiom_suite,
)
from smashlab.errors import ConfigError
from smashlab.fileio import Scene
from smashlab.geometry import Ball
from smashlab.scenes import STANDARD_SUITE, builtin_scene

H = 1 / 32


@pytest.fixture(scope="module")
def suite_scenes():
    return [builtin_scene(n) for n in STANDARD_SUITE]


class TestIndividualChecks:
    def test_mass_disjoint_exact(self):
        rep = check_mass(builtin_scene("disjoint2d"), H)
        assert rep.passed and rep.discrepancy_cells == 0

    def test_mass_concentric_within_tolerance(self):
        rep = check_mass(builtin_scene("concentric2d"), 1 / 64)
        assert rep.passed
        assert rep.discrepancy_measure <= 0.015 * 2 * np.pi
        # refinement roughly halves the gap
        coarse = check_mass(builtin_scene("concentric2d"), 1 / 32)
        assert rep.discrepancy_measure <= 0.7 * coarse.discrepancy_measure

    def test_monotone(self, suite_scenes):
        for scene in suite_scenes:
            rep = check_monotone(scene, H)
            assert rep.passed, scene.name
            assert rep.detail["a_outside_sum_cells"] == 0

    def test_commute_exact(self, suite_scenes):
        for scene in suite_scenes:
            rep = check_commute(scene, H)
            assert rep.passed and rep.discrepancy_cells == 0

    def test_translate_exact(self, suite_scenes):
        for scene in suite_scenes:
            rep = check_translate(scene, H)
            assert rep.passed and rep.discrepancy_cells == 0

    def test_isometry_exact_all_group_elements(self):
        from smashlab.geometry import cubic_isometries

        scene = builtin_scene("overlap2d")
        for u in cubic_isometries(2):
            rep = check_isometry(scene, H, u=u)
            assert rep.discrepancy_cells == 0, (u.perm, u.signs)

    def test_associate_within_tolerance(self, suite_scenes):
        for scene in suite_scenes:
            rep = check_associate(scene, H)
            assert rep.passed, scene.name

    def test_associate_needs_c(self):
        scene = Scene("noc", 2, Ball((0, 0), 1.0), Ball((0.5, 0), 1.0))
        with pytest.raises(ConfigError):
            check_associate(scene, H)

    def test_inflation_inclusion(self, suite_scenes):
        for scene in suite_scenes:
            rep = check_inflation_inclusion(scene, H, eps=0.25)
            assert rep.passed, scene.name

    def test_inflation_inclusion_one_cell_eps(self):
        rep = check_inflation_inclusion(builtin_scene("overlap2d"), H, eps=H)
        assert rep.passed

    @pytest.mark.parametrize("d,h", [(1, 1 / 64), (2, 1 / 32), (3, 1 / 16)])
    def test_diameter(self, d, h):
        rep = check_diameter(d, h)
        assert rep.passed
        assert rep.detail["radius_rel_err"] <= 0.03
        assert rep.detail["outer_radius"] <= rep.detail["bound_radius"]


class TestSuite:
    def test_refinement_shrinks_discrepancy(self):
        scene = builtin_scene("overlap2d")
        coarse = check_associate(scene, 1 / 16)
        fine = check_associate(scene, 1 / 32)
        if coarse.discrepancy_measure > 0:
            ratio = fine.discrepancy_measure / coarse.discrepancy_measure
            assert ratio <= 0.7
        else:
            assert fine.discrepancy_measure == 0

    def test_suite_runs_and_is_deterministic(self, suite_scenes, tmp_path):
        r1 = run_axiom_suite(suite_scenes[:1], [1 / 16], checks=["mass", "commute"], out_dir=tmp_path / "a")
        r2 = run_axiom_suite(suite_scenes[:1], [1 / 16], checks=["mass", "commute"], out_dir=tmp_path / "b")
        assert [(r.name, r.discrepancy_cells) for r in r1] == [
            (r.name, r.discrepancy_cells) for r in r2
        ]
        assert (tmp_path / "a" / "axioms.csv").read_bytes() == (tmp_path / "b" / "axioms.csv").read_bytes()

    def test_unknown_check_rejected(self, suite_scenes):
        with pytest.raises(ConfigError):
            run_axiom_suite(suite_scenes, [H], checks=["bogus"])
