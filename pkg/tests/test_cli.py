"""Command-line behavior: exit codes, outputs, determinism."""

import json
from pathlib import Path

import pytest

from smashlab.cli import main


@pytest.fixture()
def overlap_scene(tmp_path):
    obj = {
        "name": "pair",
        "d": 2,
        "A": {"ball": {"center": [-0.6, 0.0], "r": 0.8}},
        "B": {"ball": {"center": [0.6, 0.0], "r": 0.8}},
        "C": {"ball": {"center": [0.0, 0.7], "r": 0.8}},
    }
    p = tmp_path / "pair.json"
    p.write_text(json.dumps(obj))
    return p


class TestSum:
    def test_writes_outputs_per_h(self, tmp_path, overlap_scene):
        out = tmp_path / "out"
        code = main(
            ["sum", "--scene", str(overlap_scene), "--h", "1/16,1/32", "--out", str(out)]
        )
        assert code == 0
        subdirs = sorted(p.name for p in (out / "pair").iterdir())
        assert subdirs == ["h_0.03125", "h_0.0625"]
        for sub in subdirs:
            base = out / "pair" / sub
            assert (base / "domain.pgm").exists()
            assert (base / "odometer.csv").exists()
            manifest = json.loads((base / "manifest.json").read_text())
            assert manifest["mass_drift"] <= 1e-9
            assert manifest["converged"] is True

    def test_malformed_scene_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{oops")
        assert main(["sum", "--scene", str(bad), "--out", str(tmp_path / "o")]) == 2

    def test_unknown_builtin_exits_2(self, tmp_path):
        assert main(["sum", "--scene", "nosuch", "--out", str(tmp_path / "o")]) == 2


class TestAxioms:
    def test_standard_suite_passes(self, tmp_path):
        out = tmp_path / "ax"
        code = main(
            [
                "axioms",
                "--scene",
                "overlap2d",
                "--h",
                "1/16",
                "--checks",
                "mass,commute,translate",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        assert (out / "axioms.csv").exists()

    def test_json_suite_config(self, tmp_path):
        cfg = tmp_path / "suite.json"
        cfg.write_text(
            json.dumps({"scenes": ["disjoint2d"], "h": ["1/16"], "checks": ["mass", "commute"]})
        )
        out = tmp_path / "axc"
        assert main(["axioms", "--config", str(cfg), "--out", str(out)]) == 0
        text = (out / "axioms.csv").read_text()
        assert "disjoint2d" in text and "commute" in text

    def test_byte_identical_reports(self, tmp_path):
        args = ["axioms", "--scene", "concentric2d", "--h", "1/16", "--checks", "mass,associate"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "axioms.csv").read_bytes()
        b = (tmp_path / "b" / "axioms.csv").read_bytes()
        assert a == b


class TestQuadrature:
    def test_ledger_written(self, tmp_path):
        out = tmp_path / "q"
        code = main(["quadrature", "--scene", "concentric2d", "--h", "1/16", "--out", str(out)])
        assert code == 0
        text = (out / "quadrature.csv").read_text()
        assert text.splitlines()[0] == "scene,h,function,slack,tolerance,passed"
        assert "mollified_newton" in text


class TestGame:
    def test_game_runs_and_writes_ledger(self, tmp_path, overlap_scene):
        out = tmp_path / "g"
        code = main(
            [
                "game",
                "--scene",
                str(overlap_scene),
                "--h",
                "1/16",
                "--eps",
                "0.2",
                "--delta",
                "20.0",
                "--snapshots",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        assert (out / "rounds.csv").exists()
        header = (out / "rounds.csv").read_text().splitlines()[0]
        assert "sigma_end" in header and "s_integral_end" in header
        assert list(out.glob("table_round*.pgm"))
        assert (out / "table.pgm").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "WON"
        assert manifest["final_hand_mass"] < 0.2

    def test_eps_below_grid_floor_exits_2(self, tmp_path, overlap_scene):
        code = main(
            [
                "game",
                "--scene",
                str(overlap_scene),
                "--h",
                "1/16",
                "--eps",
                "0.05",
                "--delta",
                "1.0",
                "--out",
                str(tmp_path / "g2"),
            ]
        )
        assert code == 2


class TestConverge:
    def test_ratio_column_below_one(self, tmp_path):
        out = tmp_path / "c"
        code = main(
            [
                "converge",
                "--scene",
                "overlap2d",
                "--h",
                "1/16,1/32",
                "--checks",
                "associate",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        lines = (out / "converge.csv").read_text().strip().splitlines()
        assert lines[0].split(",")[5] == "ratio"
        ratios = [row.split(",")[5] for row in lines[1:] if row.split(",")[5] != ""]
        assert ratios, "expected at least one refinement ratio"
        assert all(float(r) < 1.0 for r in ratios)
