import numpy as np
import pytest

from sgfem import write_mesh
from sgfem.mesh import initial_lshape
from sgfem.cli import (
    CSV_HEADER,
    EXIT_CAP,
    EXIT_ERROR,
    EXIT_OK,
    EXIT_USAGE,
    _parse_range,
    main,
)

RUN_ARGS = ["run", "--criterion", "A", "--tol", "5e-2"]


def read_csv(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == CSV_HEADER
    return [line.split(",") for line in lines[1:]]


class TestRun:
    def test_run_writes_trace(self, tmp_path):
        out = tmp_path / "trace.csv"
        assert main(RUN_ARGS + ["--output", str(out)]) == EXIT_OK
        rows = read_csv(out)
        assert len(rows) >= 3
        assert [int(r[0]) for r in rows] == list(range(len(rows)))
        # zeta column is empty without --with-reference
        assert all(r[-1] == "" for r in rows)
        # estimator column hits the tolerance on the last row
        assert float(rows[-1][5]) <= 5e-2

    def test_config_echo_written(self, tmp_path):
        out = tmp_path / "trace.csv"
        main(RUN_ARGS + ["--output", str(out)])
        echo = (tmp_path / "trace.csv.config").read_text(encoding="utf-8")
        assert "criterion = A" in echo
        assert "tol = 0.05" in echo
        assert "sigma = 2" in echo

    def test_byte_identical_reruns(self, tmp_path):
        first = tmp_path / "a.csv"
        second = tmp_path / "b.csv"
        main(RUN_ARGS + ["--output", str(first)])
        main(RUN_ARGS + ["--output", str(second)])
        assert first.read_bytes() == second.read_bytes()

    def test_with_reference_fills_zeta(self, tmp_path):
        out = tmp_path / "trace.csv"
        assert main(RUN_ARGS + ["--with-reference", "--output", str(out)]) == EXIT_OK
        rows = read_csv(out)
        zetas = [r[-1] for r in rows]
        filled = [float(z) for z in zetas if z != ""]
        assert filled
        assert all(0.0 < z < 2.0 for z in filled)

    def test_max_dof_cap(self, tmp_path):
        out = tmp_path / "trace.csv"
        code = main(
            ["run", "--tol", "1e-8", "--max-dof", "200", "--output", str(out)]
        )
        assert code == EXIT_CAP
        assert out.exists()

    def test_mesh_file_input(self, tmp_path):
        mesh_file = tmp_path / "initial.mesh"
        write_mesh(initial_lshape(), mesh_file)
        out = tmp_path / "trace.csv"
        ref = tmp_path / "ref.csv"
        assert main(RUN_ARGS + ["--mesh", str(mesh_file), "--output", str(out)]) == EXIT_OK
        main(RUN_ARGS + ["--output", str(ref)])
        assert out.read_bytes() == ref.read_bytes()


class TestErrors:
    def test_unknown_flag(self):
        assert main(["run", "--bogus"]) == EXIT_USAGE

    def test_bad_criterion(self):
        assert main(["run", "--criterion", "E"]) == EXIT_USAGE

    def test_missing_subcommand(self):
        assert main([]) == EXIT_USAGE

    def test_invalid_tau(self, tmp_path):
        out = tmp_path / "trace.csv"
        assert main(["run", "--tau", "1.5", "--output", str(out)]) == EXIT_ERROR

    def test_bad_config_file(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("sigma = 2\nwavelength = 7\n", encoding="utf-8")
        assert main(["run", "--config", str(cfg)]) == EXIT_ERROR

    def test_config_file_used(self, tmp_path):
        cfg = tmp_path / "ok.cfg"
        cfg.write_text("sigma = 2\ntau = 0.9\n", encoding="utf-8")
        out = tmp_path / "trace.csv"
        ref = tmp_path / "ref.csv"
        assert main(RUN_ARGS + ["--config", str(cfg), "--output", str(out)]) == EXIT_OK
        main(RUN_ARGS + ["--output", str(ref)])
        assert out.read_bytes() == ref.read_bytes()


class TestSweep:
    def test_sweep_outputs(self, tmp_path):
        outdir = tmp_path / "sweep"
        code = main(
            [
                "sweep",
                "--tol", "5e-2",
                "--theta-x", "0.4,0.6",
                "--theta-p", "0.5",
                "--output-dir", str(outdir),
            ]
        )
        assert code == EXIT_OK
        summary = (outdir / "summary.csv").read_text(encoding="utf-8").splitlines()
        assert summary[0] == "theta_x,theta_p,cost,rate,levels,reached_tol"
        assert len(summary) == 3
        for tx in (0.4, 0.6):
            per_point = outdir / f"run_thx{tx:g}_thp0.5.csv"
            rows = read_csv(per_point)
            assert len(rows) >= 2
        costs = [float(line.split(",")[2]) for line in summary[1:]]
        assert all(c > 0 for c in costs)

    def test_sweep_cap_exit(self, tmp_path):
        outdir = tmp_path / "sweep"
        code = main(
            [
                "sweep",
                "--tol", "1e-8",
                "--max-dof", "200",
                "--theta-x", "0.5",
                "--theta-p", "0.5",
                "--output-dir", str(outdir),
            ]
        )
        assert code == EXIT_CAP


class TestParseRange:
    def test_single_value(self):
        assert _parse_range("0.5") == [0.5]

    def test_list(self):
        assert _parse_range("0.3,0.5,0.7") == [0.3, 0.5, 0.7]

    def test_range_with_step(self):
        assert np.allclose(_parse_range("0.3..0.5..0.1"), [0.3, 0.4, 0.5])

    def test_range_default_step(self):
        values = _parse_range("0.2..0.4")
        assert values[0] == pytest.approx(0.2)
        assert values[-1] == pytest.approx(0.4)

    def test_invalid(self):
        with pytest.raises(ValueError):
            _parse_range("0.5..0.3..0.1")
