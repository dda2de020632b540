import json

import numpy as np
import pytest

from dualorlicz import Case, SchemaError
from dualorlicz.cli import main, parse_config

ELLIPSE = {
    "problem": {"n": 2, "p": 2, "q": 2, "f": "1"},
    "grid": {"N": 256},
    "flow": {"tol_conv": 1e-8},
    "initial": {"shape": "ellipse", "a": 1.4, "b": 0.8},
}


def write(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


class TestParse:
    def test_minimal(self):
        cfg = parse_config(json.dumps({"problem": {"n": 2, "p": 2, "q": 2, "f": "1"}, "grid": {"N": 256}}))
        assert cfg.spec.case is Case.CASE1 and cfg.spec.grid.N == 256
        assert cfg.resolved["flow"]["scheme"] == "imex"

    def test_odd_f_rejected(self):
        with pytest.raises(SchemaError) as exc:
            parse_config(json.dumps({"problem": {"n": 2, "p": 2, "q": 2, "f": "1+0.3*cos(3*theta)"}}))
        assert [p for p, _ in exc.value.issues] == ["problem.f"]

    def test_neither_case(self):
        with pytest.raises(SchemaError) as exc:
            parse_config(json.dumps({"problem": {"n": 2, "p": 1, "q": -1}}))
        assert any("NeitherCase" in m for _, m in exc.value.issues)

    def test_all_errors_reported(self):
        cfg = {
            "problem": {"n": 2, "p": 1, "q": -1, "f": "cos(3*theta)+2", "extra": 0},
            "grid": {"N": 7},
            "flow": {"dt_min": "x"},
            "initial": {"shape": "torus"},
            "colour": "red",
        }
        with pytest.raises(SchemaError) as exc:
            parse_config(json.dumps(cfg))
        paths = {p for p, _ in exc.value.issues}
        assert {"colour", "problem.extra", "grid.N", "flow.dt_min", "initial.shape"} <= paths

    def test_custom_weight_and_density(self):
        cfg = {
            "problem": {
                "n": 2,
                "f": "1",
                "weight": {"phi": "s^2", "case": "Case2"},
                "density": {"g": "r^(-3)", "finite_inside": False, "finite_outside": True, "tail": "1/r"},
            }
        }
        assert parse_config(json.dumps(cfg)).spec.case is Case.CASE2

    def test_invalid_json(self):
        with pytest.raises(SchemaError):
            parse_config("{not json")

    def test_random_initial_is_seeded(self):
        base = {"problem": {"n": 2, "p": 2, "q": 2}, "initial": {"shape": "random_cosine", "modes": 3}}
        a = parse_config(json.dumps({**base, "seed": 3})).initial
        b = parse_config(json.dumps({**base, "seed": 3})).initial
        c = parse_config(json.dumps({**base, "seed": 4})).initial
        assert a == b and a != c


class TestCommands:
    def test_run_ellipse(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["run", write(tmp_path, ELLIPSE), "--out", str(out)])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["verdict"]["status"] == "Converged"
        assert report["residual"]["residual_sup"] <= 1e-4
        assert report["config"]["problem"]["p"] == 2 and report["config"]["flow"]["tol_conv"] == 1e-8
        for name in ("trace.csv", "profile_final.csv", "functionals.jsonl", "plotdata/h_snapshots.csv",
                     "plotdata/J_vs_t.csv", "plotdata/Vg_vs_t.csv"):  # fmt: skip
            assert (out / name).exists(), name
        assert "Converged" in capsys.readouterr().out

    def test_snapshots_geometric(self, tmp_path):
        out = tmp_path / "o"
        main(["run", write(tmp_path, ELLIPSE), "--out", str(out), "--quiet"])
        rows = (out / "plotdata" / "h_snapshots.csv").read_text().splitlines()[1:]
        times = sorted({float(r.split(",")[1]) for r in rows})
        assert times[0] == 0.0
        ratios = np.array(times[2:-1]) / np.array(times[1:-2])
        assert np.all(ratios >= 1.9)

    def test_forced_step_failure(self, tmp_path):
        cfg = {**ELLIPSE, "flow": {"dt_init": 0.05, "dt_min": 0.01, "dt_max": 0.05, "scheme": "rk2"}}
        out = tmp_path / "o"
        assert main(["run", write(tmp_path, cfg), "--out", str(out), "--quiet"]) == 1
        verdict = json.loads((out / "report.json").read_text())["verdict"]
        assert verdict["status"] == "Failed" and "StepFailure" in verdict["reason"]

    def test_audit_and_residual_replay(self, tmp_path):
        out = tmp_path / "o"
        cfg = write(tmp_path, ELLIPSE)
        main(["run", cfg, "--out", str(out), "--quiet"])
        assert main(["audit", str(out / "trace.csv"), cfg, "--out", str(out), "--quiet"]) == 0
        assert json.loads((out / "audit.json").read_text())["passed"]
        assert main(["residual", str(out / "profile_final.csv"), cfg, "--out", str(out), "--quiet"]) == 0
        assert json.loads((out / "residual.json").read_text())["residual_sup"] <= 1e-4

    def test_audit_detects_tampering(self, tmp_path):
        out = tmp_path / "o"
        cfg = write(tmp_path, ELLIPSE)
        main(["run", cfg, "--out", str(out), "--quiet"])
        lines = (out / "trace.csv").read_text().splitlines()
        cols = lines[5].split(",")
        cols[4] = repr(float(cols[4]) + 1.0)  # J column
        lines[5] = ",".join(cols)
        (out / "trace.csv").write_text("\n".join(lines) + "\n")
        assert main(["audit", str(out / "trace.csv"), cfg, "--out", str(out), "--quiet"]) == 1

    def test_residual_tolerance_exit(self, tmp_path):
        out = tmp_path / "o"
        main(["run", write(tmp_path, {**ELLIPSE, "flow": {"max_steps": 2}}), "--out", str(out), "--quiet"])
        strict = write(tmp_path, {**ELLIPSE, "verify": {"residual_tol": 1e-6}}, "strict.json")
        assert main(["residual", str(out / "profile_final.csv"), strict, "--out", str(out), "--quiet"]) == 1

    def test_deterministic(self, tmp_path):
        cfg = write(tmp_path, {**ELLIPSE, "initial": {"shape": "random_cosine", "modes": 3}, "seed": 11})
        main(["run", cfg, "--out", str(tmp_path / "a"), "--quiet"])
        main(["run", cfg, "--out", str(tmp_path / "b"), "--quiet"])
        assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DUALORLICZ_OUT", str(tmp_path / "env"))
        cfg = {**ELLIPSE, "output": {"dir": str(tmp_path / "cfg"), "plot_data": False}, "flow": {"max_steps": 1}}
        main(["run", write(tmp_path, cfg), "--quiet"])
        assert (tmp_path / "env" / "report.json").exists()
        assert not (tmp_path / "cfg").exists()
        assert not (tmp_path / "env" / "plotdata").exists()

    def test_schema_error_exit(self, tmp_path, capsys):
        cfg = write(tmp_path, {"problem": {"n": 2, "p": 1, "q": -1}, "bogus": 1})
        assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 2
        err = capsys.readouterr().err
        assert "bogus" in err and "NeitherCase" in err
        assert json.loads((tmp_path / "o" / "report.json").read_text())["errors"]
