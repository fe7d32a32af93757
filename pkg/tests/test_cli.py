import json

import numpy as np
import pytest

from flocksde import load_result
from flocksde.cli import main, parse_kernel_spec, parse_noise_spec
from flocksde.cli import UsageError


def read_csv(path):
    header = None
    rows = []
    provenance = []
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            provenance.append(line)
        elif header is None:
            header = line.split(",")
        else:
            rows.append(line.split(","))
    return provenance, header, rows


class TestSpecParsing:
    def test_kernel_specs(self):
        assert parse_kernel_spec("constant") == {"kind": "constant", "K": 1.0}
        assert parse_kernel_spec("constant:K=2.5") == {"kind": "constant", "K": 2.5}
        assert parse_kernel_spec("rational:K=1,c=2,beta=0.3") == {
            "kind": "rational", "K": 1.0, "c": 2.0, "beta": 0.3}
        assert parse_kernel_spec("singular:beta=0.5,cap=1e-4")["cap_s"] == 1e-4
        assert parse_kernel_spec("singular:cap=none")["cap_s"] is None

    def test_noise_specs(self):
        assert parse_noise_spec("none") == {"kind": "none"}
        assert parse_noise_spec("common:sigma=0.3") == {"kind": "common", "sigma": 0.3}
        assert parse_noise_spec("additive:D=4") == {"kind": "additive", "D": 4.0}
        spec = parse_noise_spec("multiplicative:D=1,ve=0.5:-1")
        assert spec["v_ref"] == [0.5, -1.0]

    def test_bad_specs_raise(self):
        for text in ("mystery", "rational:beta", "rational:zeta=1", "common:sigma=x"):
            with pytest.raises(UsageError):
                parse_kernel_spec(text) if "sigma" not in text else parse_noise_spec(text)
        with pytest.raises(UsageError):
            parse_noise_spec("common")  # sigma required


class TestExitCodes:
    def test_no_subcommand_is_usage_error(self, capsys):
        assert main([]) == 2
        capsys.readouterr()

    def test_bad_kernel_spec_is_usage_error(self, tmp_path, capsys):
        code = main(["simulate", "--kernel", "mystery", "--out", str(tmp_path), "--no-plot"])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_bad_config_file_is_usage_error(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text("{not json")
        code = main(["simulate", "--config", str(cfg), "--out", str(tmp_path), "--no-plot"])
        assert code == 2
        capsys.readouterr()

    def test_preset_and_config_conflict(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text("{}")
        code = main(["simulate", "--preset", "fig2", "--config", str(cfg),
                     "--out", str(tmp_path), "--no-plot"])
        assert code == 2
        capsys.readouterr()

    def test_blow_up_is_exit_3(self, tmp_path, capsys):
        # unclamped singular kernel with two coincident particles
        config = {
            "model": {
                "kernel": {"kind": "singular", "K": 1.0, "beta": 0.5, "cap_s": None},
                "noise": {"kind": "none"},
                "n_particles": 3,
                "dim": 2,
            },
            "dt": 1e-3,
            "t_final": 0.1,
            "n_trials": 1,
            "base_seed": 0,
            "init": {"kind": "explicit", "t": 0.0,
                     "x": [[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]],
                     "v": [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]},
        }
        path = tmp_path / "blowup.json"
        path.write_text(json.dumps(config))
        code = main(["simulate", "--config", str(path), "--out", str(tmp_path), "--no-plot"])
        assert code == 3
        assert "blow-up" in capsys.readouterr().err


class TestThresholdsCommand:
    def test_constant_kernel_regimes(self, capsys):
        assert main(["thresholds", "--n", "50", "--kernel", "constant:K=1", "--sigma", "0.05"]) == 0
        out = capsys.readouterr().out
        assert "0.1414213562373095" in out
        assert "flocking regime" in out

        assert main(["thresholds", "--n", "50", "--sigma", "0.3"]) == 0
        assert "non-flocking regime" in capsys.readouterr().out

        assert main(["thresholds", "--n", "50", "--sigma", repr(float(np.sqrt(0.02)))]) == 0
        assert "gap/indeterminate" in capsys.readouterr().out

    def test_unbounded_kernel_explains_inapplicability(self, capsys):
        assert main(["thresholds", "--n", "10", "--kernel", "singular:cap=none", "--sigma", "5"]) == 0
        out = capsys.readouterr().out
        assert "no noise level certifies non-flocking" in out

    def test_n_required(self, capsys):
        assert main(["thresholds", "--kernel", "constant"]) == 2
        capsys.readouterr()


class TestSimulateCommand:
    def test_free_flight_constant_dispersion(self, tmp_path, capsys):
        code = main(["simulate", "--kernel", "constant:K=0", "--noise", "none",
                     "--T", "1", "--dt", "0.01", "--out", str(tmp_path), "--no-plot"])
        assert code == 0
        capsys.readouterr()
        provenance, header, rows = read_csv(tmp_path / "trajectory.csv")
        assert header == ["t", "v2_centered", "dispersion", "max_pair_dist", "w_t"]
        assert any(line.startswith("# provenance=") for line in provenance)
        disp = {row[1] for row in rows}  # v2_centered column as exact strings
        assert len(disp) == 1

    def test_rerun_byte_identical(self, tmp_path, capsys):
        args = ["simulate", "--seed", "3", "--T", "0.2", "--dt", "0.01", "--no-plot"]
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out", str(a_dir)]) == 0
        assert main(args + ["--out", str(b_dir)]) == 0
        capsys.readouterr()
        assert (a_dir / "trajectory.csv").read_bytes() == (b_dir / "trajectory.csv").read_bytes()

    def test_oracle_column(self, tmp_path, capsys):
        code = main(["simulate", "--kernel", "constant:K=1", "--noise", "common:sigma=0.1",
                     "--n", "5", "--dim", "2", "--T", "1", "--dt", "0.0001",
                     "--seed", "4", "--oracle", "--out", str(tmp_path), "--no-plot"])
        assert code == 0
        capsys.readouterr()
        _, header, rows = read_csv(tmp_path / "trajectory.csv")
        assert header[-1] == "oracle_v2"
        v2 = np.array([float(r[1]) for r in rows])
        oracle = np.array([float(r[-1]) for r in rows])
        gap = np.abs(np.log(v2[1:]) - np.log(oracle[1:])).max()
        assert gap <= 1e-2

    def test_oracle_requires_constant_kernel(self, tmp_path, capsys):
        code = main(["simulate", "--kernel", "rational", "--oracle",
                     "--out", str(tmp_path), "--no-plot"])
        assert code == 2
        capsys.readouterr()

    def test_plot_rendered_by_default(self, tmp_path, capsys):
        code = main(["simulate", "--T", "0.1", "--dt", "0.01", "--out", str(tmp_path)])
        assert code == 0
        capsys.readouterr()
        assert (tmp_path / "trajectory.png").exists()


class TestEnsembleCommand:
    def run_small(self, out, extra=(), trials="3"):
        return main(["ensemble", "--trials", trials, "--n", "3", "--T", "0.1",
                     "--dt", "0.01", "--seed", "9", "--out", str(out), "--no-plot", *extra])

    def test_outputs_and_determinism(self, tmp_path, capsys):
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        assert self.run_small(a_dir) == 0
        assert self.run_small(b_dir) == 0
        out = capsys.readouterr().out
        assert "verdict" in out
        assert (a_dir / "ensemble.csv").read_bytes() == (b_dir / "ensemble.csv").read_bytes()
        provenance, header, rows = read_csv(a_dir / "ensemble.csv")
        assert header == ["t", "mean_dispersion", "stderr_dispersion", "mean_v2",
                          "stderr_v2", "mean_pairdist", "diverged_count"]
        result = load_result(a_dir / "ensemble.json")
        assert result.n_trials == 3
        assert result.provenance["config"]["base_seed"] == 9

    def test_workers_flag_keeps_bytes(self, tmp_path, capsys):
        a_dir, b_dir = tmp_path / "w1", tmp_path / "w2"
        assert self.run_small(a_dir, extra=["--workers", "1"]) == 0
        assert self.run_small(b_dir, extra=["--workers", "2"]) == 0
        capsys.readouterr()
        a = (a_dir / "ensemble.csv").read_text()
        b = (b_dir / "ensemble.csv").read_text()
        # provenance echoes the worker count; numeric rows must agree exactly
        a_rows = [l for l in a.splitlines() if not l.startswith("#")]
        b_rows = [l for l in b.splitlines() if not l.startswith("#")]
        assert a_rows == b_rows

    def test_fig2_preset_with_shortened_horizon(self, tmp_path, capsys):
        code = main(["ensemble", "--preset", "fig2", "--T", "0.04", "--dt", "0.001",
                     "--out", str(tmp_path), "--no-plot"])
        assert code == 0
        capsys.readouterr()
        assert (tmp_path / "snapshot_t0.csv").exists()
        assert (tmp_path / "snapshot_t0.02.csv").exists()
        assert not (tmp_path / "snapshot_t0.5.csv").exists()
        _, header, rows = read_csv(tmp_path / "snapshot_t0.csv")
        assert header == ["x0", "x1", "x2", "v0", "v1", "v2"]
        assert len(rows) == 50

    def test_config_file_with_flag_override(self, tmp_path, capsys):
        cfg = {
            "model": {"kernel": {"kind": "constant", "K": 1.0},
                      "noise": {"kind": "common", "sigma": 0.5},
                      "n_particles": 3, "dim": 1},
            "dt": 0.01, "t_final": 0.1, "n_trials": 2, "base_seed": 4,
            "init": {"kind": "uniform_box", "x_low": 0, "x_high": 1, "v_low": 0, "v_high": 1},
        }
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        assert main(["ensemble", "--config", str(path), "--sigma", "0.25",
                     "--out", str(tmp_path), "--no-plot"]) == 0
        capsys.readouterr()
        result = load_result(tmp_path / "ensemble.json")
        assert result.provenance["config"]["model"]["noise"]["sigma"] == 0.25


class TestVerifyCommand:
    def test_default_suite_passes(self, tmp_path, capsys):
        code = main(["verify", "--out", str(tmp_path)])
        out = capsys.readouterr().out
        assert code == 0
        assert "all checks passed" in out
        report = json.loads((tmp_path / "verify_report.json").read_text())
        assert report["passed"] is True
        for check in report["checks"]:
            assert {"name", "measured", "bound", "comparator", "passed"} <= set(check)

    def test_negative_control_fails(self, tmp_path, capsys):
        code = main(["verify", "--negative-control", "--out", str(tmp_path)])
        out = capsys.readouterr().out
        assert code == 1
        assert "FAIL" in out
        report = json.loads((tmp_path / "verify_report.json").read_text())
        failed = {c["name"] for c in report["checks"] if not c["passed"]}
        assert "pathwise_exactness_const_kernel" in failed
        assert "strong_convergence_order" in failed
