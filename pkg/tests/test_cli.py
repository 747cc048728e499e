import json
import math
from pathlib import Path

import numpy as np
import pytest

from core.measures import MeasureFlow
from core.output_writer import OutputWriter, jsonable
from src.cli import EXIT_FAIL, EXIT_IO, EXIT_PASS, EXIT_REFUSED, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

OU = {"kind": "linear_meanfield", "a": -1.0}


def invoke(write_config, tmp_path, doc, *flags, out="out"):
    path = write_config(doc)
    output = tmp_path / out
    code = main(["--config", str(path), "--output-dir", str(output), *flags])
    return code, output


def report_of(output):
    return json.loads((output / "report.json").read_text(encoding="utf-8"))


class TestSimulate:
    def test_ou_terminal_moment(self, write_config, tmp_path, capsys):
        doc = {"task": "simulate", "model": OU, "sim": {"dt": 1e-3, "steps": 2000, "n_particles": 5}}
        code, output = invoke(write_config, tmp_path, doc)
        assert code == EXIT_PASS
        report = report_of(output)
        assert abs(report["terminal_moment"] - math.exp(-2.0)) <= 2e-3
        assert report["model"]["a"] == -1.0
        assert "simulate: N=5 steps=2000" in capsys.readouterr().out

        lines = (output / "curves.csv").read_bytes().split(b"\r\n")
        assert lines[0] == b"t,moment,moment_stderr,mean_1"
        assert len([line for line in lines if line]) == 2002
        assert float(lines[2001].split(b",")[0]) == pytest.approx(2.0)

    def test_thread_count_gives_identical_files(self, write_config, tmp_path):
        doc = {
            "task": "simulate",
            "model": {"kind": "linear_meanfield", "a": -1.0, "b_mf": 0.25, "c0": 0.5},
            "initial": {"kind": "gaussian", "mean": [1.0], "cov": [[0.5]]},
            "sim": {"dt": 1e-2, "steps": 20, "n_particles": 3000, "seed": 9, "record_stride": 5},
            "output": {"ensemble": "ensemble.csv"},
        }
        code_1, single = invoke(write_config, tmp_path, doc, "--threads", "1", out="single")
        code_4, pooled = invoke(write_config, tmp_path, doc, "--threads", "4", out="pooled")
        assert code_1 == code_4 == EXIT_PASS
        for name in ("report.json", "curves.csv", "ensemble.csv"):
            assert (single / name).read_bytes() == (pooled / name).read_bytes()

    def test_seed_override(self, write_config, tmp_path):
        doc = {
            "task": "simulate",
            "model": {"kind": "linear_meanfield", "a": -1.0, "c0": 1.0},
            "sim": {"dt": 1e-2, "steps": 10, "n_particles": 20, "seed": 1},
        }
        invoke(write_config, tmp_path, doc, out="base")
        invoke(write_config, tmp_path, doc, "--seed", "1", out="same")
        invoke(write_config, tmp_path, doc, "--seed", "2", out="other")
        base = (tmp_path / "base" / "curves.csv").read_bytes()
        assert (tmp_path / "same" / "curves.csv").read_bytes() == base
        assert (tmp_path / "other" / "curves.csv").read_bytes() != base
        assert report_of(tmp_path / "other")["sim"]["seed"] == 2

    def test_blow_up(self, write_config, tmp_path, capsys):
        doc = {
            "task": "simulate",
            "model": {"kind": "power_drift"},
            "initial": {"kind": "constant", "value": [10.0]},
            "sim": {"dt": 0.1, "steps": 20, "n_particles": 2},
        }
        code, output = invoke(write_config, tmp_path, doc)
        assert code == EXIT_REFUSED
        report = report_of(output)
        assert report["verdict"] == "blow-up"
        assert report["step"] >= 1
        assert "blow-up" in capsys.readouterr().out


class TestCertify:
    def test_sample_config(self, tmp_path, capsys):
        output = tmp_path / "out"
        code = main(["--config", str(CONFIGS / "certify_geometric.json"), "--output-dir", str(output)])
        assert code == EXIT_PASS
        report = report_of(output)
        assert report["pathwise_exponent"] == pytest.approx(-0.625)
        assert report["order"] == 1.0
        # gamma_2 = -1.75 lies above the envelope, so only the pathwise certificate is issued
        assert report["moment_exponent"] is None
        assert "t=0" in report["moment_refusal"]
        assert "pathwise exponent -0.625" in capsys.readouterr().out

    def test_refusal(self, write_config, tmp_path):
        doc = {
            "task": "verify-pathwise",
            "model": OU,
            "initial_b": {"kind": "constant", "value": [2.0]},
            "envelope": {"alpha": [1.0], "lambda_hat": [-10.0], "s": [0.0]},
            "sim": {"dt": 1e-2, "steps": 100, "n_particles": 2},
        }
        code, output = invoke(write_config, tmp_path, doc)
        assert code == EXIT_REFUSED
        report = report_of(output)
        assert report["verdict"] == "refused"
        assert "envelope" in report["reason"]


class TestVerify:
    def test_identical_coupled_models_pass(self, write_config, tmp_path, capsys):
        doc = {
            "task": "verify-moment",
            "model": {"kind": "linear_meanfield", "a": -1.0, "b_mf": 0.25, "c0": 0.5},
            "sim": {"dt": 1e-2, "steps": 50, "n_particles": 20},
        }
        code, output = invoke(write_config, tmp_path, doc)
        assert code == EXIT_PASS
        report = report_of(output)
        assert report["verdict"] == "pass"
        assert report["t_star"] is None
        assert capsys.readouterr().out.strip() == "verify-moment: pass"

    def test_different_second_model_needs_a_profile(self, write_config, tmp_path):
        doc = {
            "task": "verify-moment",
            "model": {"kind": "linear_meanfield", "a": -1.0, "c0": 0.5},
            "model_b": {"kind": "linear_meanfield", "a": -2.0, "c0": 0.5},
            "sim": {"dt": 1e-2, "steps": 50, "n_particles": 20},
        }
        code, output = invoke(write_config, tmp_path, doc)
        assert code == EXIT_REFUSED
        report = report_of(output)
        assert report["verdict"] == "error"
        assert "explicit profile" in report["reason"]

    def test_repeated_second_model_uses_the_derived_profile(self, write_config, tmp_path):
        model = {"kind": "linear_meanfield", "a": -1.0, "c0": 0.5}
        doc = {
            "task": "verify-moment",
            "model": model,
            "model_b": dict(model),
            "initial_b": {"kind": "constant", "value": [2.0]},
            "sim": {"dt": 1e-2, "steps": 50, "n_particles": 20},
        }
        code, _ = invoke(write_config, tmp_path, doc)
        assert code == EXIT_PASS

    def test_failing_bound(self, write_config, tmp_path, capsys):
        doc = {
            "task": "verify-exponential",
            "model": OU,
            "initial_b": {"kind": "constant", "value": [2.0]},
            "exponential": {"exponent": -10.0},
            "sim": {"dt": 1e-2, "steps": 50, "n_particles": 2},
        }
        code, output = invoke(write_config, tmp_path, doc)
        assert code == EXIT_FAIL
        assert report_of(output)["t_star"] == pytest.approx(0.01)
        assert "fail at t=0.01" in capsys.readouterr().out

    def test_growth(self, write_config, tmp_path):
        doc = {"task": "verify-growth", "model": OU, "sim": {"dt": 1e-2, "steps": 100, "n_particles": 3}}
        code, output = invoke(write_config, tmp_path, doc)
        assert code == EXIT_PASS
        header = (output / "curves.csv").read_text(encoding="utf-8").splitlines()[0]
        assert header == "t,bound,empirical,mc_sigma"


class TestPicardAndBihari:
    def test_picard(self, write_config, tmp_path):
        doc = {
            "task": "picard",
            "model": {"kind": "linear_meanfield", "a": -1.0, "b_mf": 0.25},
            "picard": {"mu0": "dirac"},
            "sim": {"dt": 1e-2, "steps": 100, "n_particles": 4},
        }
        code, output = invoke(write_config, tmp_path, doc)
        assert code == EXIT_PASS
        report = report_of(output)
        assert report["converged"] is True
        assert len(report["error_bounds"]) == len(report["distances"])
        header = (output / "curves.csv").read_text(encoding="utf-8").splitlines()[0]
        assert "oracle_mean" in header

    def test_bihari(self, write_config, tmp_path):
        doc = {"task": "bihari", "model": OU, "sim": {"dt": 1e-2, "steps": 100}}
        code, output = invoke(write_config, tmp_path, doc)
        assert code == EXIT_PASS
        report = report_of(output)
        assert report["terminal_bound"] == pytest.approx(math.e, rel=1e-6)
        assert report["phi_zero"] == "-inf"
        assert report["t0_plus"] == "inf"
        assert report["osgood_at_zero"] == "divergent"


class TestFailures:
    def test_missing_config(self, tmp_path):
        assert main(["--config", str(tmp_path / "absent.json")]) == EXIT_IO

    def test_invalid_config(self, write_config, tmp_path, capsys):
        code, _ = invoke(write_config, tmp_path, {"task": "simulate"})
        assert code == EXIT_REFUSED
        assert "model" in capsys.readouterr().out

    def test_invalid_seed(self, write_config, tmp_path):
        code, _ = invoke(write_config, tmp_path, {"task": "simulate", "model": OU}, "--seed", "-1")
        assert code == EXIT_REFUSED

    def test_invalid_thread_count(self, write_config, tmp_path):
        code, _ = invoke(write_config, tmp_path, {"task": "simulate", "model": OU}, "--threads", "0")
        assert code == EXIT_REFUSED

    def test_output_dir_is_a_file(self, write_config, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("x", encoding="utf-8")
        doc = {"task": "simulate", "model": OU, "sim": {"steps": 5, "n_particles": 2}}
        path = write_config(doc)
        assert main(["--config", str(path), "--output-dir", str(blocker)]) == EXIT_IO


class TestOutputWriter:
    def test_non_finite_values(self):
        payload = jsonable({"a": float("inf"), "b": [np.float64("-inf"), float("nan")], "c": np.int64(3)})
        assert payload == {"a": "inf", "b": ["-inf", "nan"], "c": 3}

    def test_sorted_keys(self, tmp_path):
        path = OutputWriter(tmp_path).write_report("r.json", {"b": 1, "a": np.bool_(True)})
        assert path.read_text(encoding="utf-8") == '{\n  "a": true,\n  "b": 1\n}\n'

    def test_curves_keep_full_precision(self, tmp_path):
        path = OutputWriter(tmp_path).write_curves("c.csv", [0.0, 0.1], {"x": [1.0 / 3.0, 2.0]})
        rows = path.read_text(encoding="utf-8").splitlines()
        assert rows == ["t,x", f"0.0,{1.0 / 3.0!r}", "0.1,2.0"]

    def test_ensemble_rows(self, tmp_path):
        flow = MeasureFlow([0.0, 1.0], np.arange(8.0).reshape(2, 2, 2))
        path = OutputWriter(tmp_path).write_ensemble("e.csv", flow)
        rows = path.read_text(encoding="utf-8").splitlines()
        assert rows[0] == "t,particle_id,x_1,x_2"
        assert rows[-1] == "1.0,1,6.0,7.0"
        assert len(rows) == 5
