import json
import subprocess
import sys

import pytest

from shapeprog.cli import main
from shapeprog.io import read_binvox

PROGRAM = "(program (block (for 3 rot (draw line 0 0.4 0 1 0.4 0 0.1))))\n"
CUBOID = "(program (block (draw cuboid 0 0 0 1 1 1 0 0 0)))\n"


@pytest.fixture
def prog_file(tmp_path):
    path = tmp_path / "prog.sp"
    path.write_text(PROGRAM)
    return path


def run(args):
    return main([str(a) for a in args])


class TestCompile:
    def test_json_to_stdout(self, prog_file, capsys):
        assert run(["compile", prog_file]) == 0
        data = json.loads(capsys.readouterr().out)
        assert len(data["primitives"]) == 3
        assert data["primitives"][0]["kind"] == "cylinder"

    def test_json_to_file(self, prog_file, tmp_path):
        out = tmp_path / "prims.json"
        assert run(["compile", prog_file, "--json", out]) == 0
        assert len(json.loads(out.read_text())["primitives"]) == 3

    def test_parse_error_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.sp"
        bad.write_text("(program (block (draw line 0 0 0)))")
        assert run(["compile", bad]) == 2
        assert "error" in capsys.readouterr().err

    def test_validation_error_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.sp"
        bad.write_text("(program (block (draw line 1 1 1 1 1 1 0.1)))")
        assert run(["compile", bad]) == 2
        assert "degenerate line" in capsys.readouterr().err

    def test_missing_file_exit_2(self, tmp_path):
        assert run(["compile", tmp_path / "absent.sp"]) == 2


class TestRender:
    def test_exact_record_count(self, prog_file, tmp_path):
        out = tmp_path / "cloud.xyz"
        assert run(["render", prog_file, "--points", 5000, "--seed", 3, "--out", out]) == 0
        lines = [l for l in out.read_text().splitlines() if l.strip()]
        assert len(lines) == 5000

    def test_ply_output(self, prog_file, tmp_path):
        out = tmp_path / "cloud.ply"
        assert run(["render", prog_file, "--points", 100, "--out", out]) == 0
        text = out.read_text()
        assert "element vertex 100" in text

    def test_deterministic_default_seed(self, prog_file, tmp_path):
        a, b = tmp_path / "a.xyz", tmp_path / "b.xyz"
        run(["render", prog_file, "--points", 50, "--out", a])
        run(["render", prog_file, "--points", 50, "--out", b])
        assert a.read_text() == b.read_text()

    def test_unknown_extension_exit_2(self, prog_file, tmp_path):
        assert run(["render", prog_file, "--points", 10, "--out", tmp_path / "c.csv"]) == 2


class TestVoxelize:
    def test_binvox_output(self, prog_file, tmp_path):
        out = tmp_path / "shape.binvox"
        assert run(["voxelize", prog_file, "--dim", 32, "--out", out]) == 0
        grid = read_binvox(out.read_bytes())
        assert grid.dim == (32, 32, 32)
        assert grid.occupancy.any()


class TestLoss:
    def test_coverage_of_own_render_prints_zero(self, prog_file, tmp_path, capsys):
        cloud = tmp_path / "target.xyz"
        run(["render", prog_file, "--points", 500, "--seed", 5, "--out", cloud])
        capsys.readouterr()
        assert run(["loss", "--program", prog_file, "--target", cloud,
                    "--loss", "coverage", "--points", 500, "--seed", 5]) == 0
        printed = float(capsys.readouterr().out.strip())
        assert abs(printed) < 1e-9

    def test_chamfer_direction_flags(self, prog_file, tmp_path, capsys):
        cloud = tmp_path / "target.xyz"
        run(["render", prog_file, "--points", 200, "--seed", 5, "--out", cloud])
        capsys.readouterr()
        values = {}
        for direction in ("fwd", "bwd", "sym"):
            assert run(["loss", "--program", prog_file, "--target", cloud,
                        "--loss", "chamfer", "--direction", direction,
                        "--points", 100, "--seed", 1]) == 0
            values[direction] = float(capsys.readouterr().out.strip())
        assert values["sym"] == pytest.approx(values["fwd"] + values["bwd"], rel=1e-12)

    def test_obj_target(self, prog_file, tmp_path, capsys):
        obj = tmp_path / "target.obj"
        obj.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        assert run(["loss", "--program", prog_file, "--target", obj,
                    "--loss", "chamfer", "--points", 64]) == 0
        assert float(capsys.readouterr().out.strip()) > 0


class TestFitCommand:
    def test_fit_writes_program_and_trace(self, tmp_path, capsys):
        prog = tmp_path / "start.sp"
        prog.write_text("(program (block (draw cuboid 0.1 0.05 -0.09 0.9 1.1 0.95 0 0 0)))\n")
        truth = tmp_path / "truth.sp"
        truth.write_text(CUBOID)
        cloud = tmp_path / "target.xyz"
        run(["render", truth, "--points", 256, "--seed", 2, "--out", cloud])
        out, trace = tmp_path / "fitted.sp", tmp_path / "trace.csv"
        code = run(["fit", "--program", prog, "--target", cloud, "--steps", 40,
                    "--lr", "0.05", "--points", 256, "--seed", 2,
                    "--out", out, "--trace", trace])
        assert code == 0
        rows = trace.read_text().splitlines()
        assert rows[0] == "step,loss"
        assert len(rows) == 41
        losses = [float(r.split(",")[1]) for r in rows[1:]]
        assert min(losses) < 0.5 * losses[0]
        from shapeprog.dsl import builtin_registry, parse_program
        fitted = parse_program(out.read_text(), builtin_registry())
        assert len(fitted.blocks) == 1


class TestGradcheck:
    def test_random_program_exit_0(self, prog_file, tmp_path, capsys):
        cloud = tmp_path / "target.xyz"
        run(["render", prog_file, "--points", 128, "--seed", 9, "--out", cloud])
        report = tmp_path / "report.json"
        code = run(["gradcheck", "--program", prog_file, "--target", cloud,
                    "--loss", "chamfer", "--points", 128, "--seed", 4,
                    "--h", "1e-5", "--tol", "1e-4", "--json", report])
        assert code == 0
        data = json.loads(report.read_text())
        assert data["slots"]
        assert all(not s["boundary"] or True for s in data["slots"])

    def test_bad_h_exit_2(self, prog_file, tmp_path):
        cloud = tmp_path / "t.xyz"
        run(["render", prog_file, "--points", 16, "--out", cloud])
        assert run(["gradcheck", "--program", prog_file, "--target", cloud,
                    "--h", "0"]) == 2


class TestUsage:
    def test_no_command(self):
        assert main([]) == 1

    def test_unknown_flag(self, prog_file):
        assert run(["compile", prog_file, "--what"]) == 1

    def test_missing_required(self):
        assert run(["loss", "--program", "x.sp"]) == 1


def test_console_entrypoint_runs():
    result = subprocess.run(
        [sys.executable, "-m", "shapeprog", "compile", "--help"],
        capture_output=True, text=True,
    )
    assert result.returncode == 0
    assert "PrimitiveSet" in result.stdout or "json" in result.stdout
