import csv
import json

import pytest

from chaoskit.cli import main
from chaoskit.config import ConfigError, ExperimentConfig, load_config


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_roundtrip(self):
        cfg = ExperimentConfig().override(**{"kernel": {"type": "fbm", "H": 0.7}, "grid.n": 64, "seed": 3})
        again = ExperimentConfig.from_dict(json.loads(cfg.to_json()))
        assert again.to_dict() == cfg.to_dict()
        assert again.kernel().H == 0.7 and again.grid().n == 64

    def test_rejects_bad_values(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"grid": {"T": -1, "n": 4}})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"colour": "blue"})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"kernel": {"type": "fbm", "H": 1.2}})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.json")


def test_check_parabolicity_holds(tmp_path, capsys):
    code, out = run(tmp_path, "check-parabolicity", "--kernel", "wiener", "--a", "1", "--sigma", "1", "--grid", "64")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["holds"] is True and summary["first_violation_t"] is None
    assert list(summary)[:3] == ["holds", "first_violation_t", "delta0"]
    rows = read_csv(out / "margin.csv")
    assert list(rows[0]) == ["t", "margin", "E_norm_H2"] and len(rows) == 65
    assert json.loads(capsys.readouterr().out)["holds"] is True


def test_check_parabolicity_failure_is_not_an_error(tmp_path):
    code, out = run(tmp_path, "check-parabolicity", "--kernel", "fbm", "--H", "0.75", "--a", "1", "--sigma", "1",
                    "--T", "5", "--grid", "100")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["holds"] is False and summary["first_violation_t"] == pytest.approx(4.0)


def test_solve_heat_negative_variance_exit_code(tmp_path):
    code, _ = run(tmp_path, "solve-heat", "--kernel", "wiener", "--a", "0.3", "--sigma", "1", "--grid", "32")
    assert code == 2


def test_solve_heat_outputs(tmp_path):
    code, out = run(tmp_path, "solve-heat", "--kernel", "ou_stable", "--b", "1", "--grid", "32", "--xgrid", "32")
    assert code == 0
    assert len(read_csv(out / "solution.csv")) == 32
    assert {"margin.csv", "solution.csv", "summary.json", "manifest.json"} <= {p.name for p in out.iterdir()}


def test_config_errors_exit_one(tmp_path):
    assert main(["solve-sode", "--order", "x"]) == 1
    assert main(["no-such-command"]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve-sode", "--config", str(bad)]) == 1


def test_solve_sode_mean_is_one(tmp_path):
    code, out = run(tmp_path, "solve-sode", "--kernel", "wiener", "--order", "6", "--dim", "32", "--grid", "64",
                    "--support", "2", "--full")
    assert code == 0
    rows = read_csv(out / "moments.csv")
    assert all(float(r["mean"]) == 1.0 for r in rows)
    assert (out / "solution.json").exists()


def test_inspect_field(tmp_path):
    code, out = run(tmp_path, "inspect-field", "--kernel", "fbm", "--H", "0.75", "--grid", "64")
    assert code == 0
    assert list(read_csv(out / "kernel.csv")[0]) == ["t", "s", "K", "dK_dt"]
    var = read_csv(out / "variance.csv")
    assert float(var[-1]["R_tt"]) == pytest.approx(1.0)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["operator_norm"] <= 1.01 * summary["norm_bound"]


def test_integrate_and_expression(tmp_path):
    code, out = run(tmp_path, "integrate", "--grid", "64", "--dim", "8")
    assert code == 0
    assert float(read_csv(out / "moments.csv")[-1]["second_moment"]) == pytest.approx(0.5, rel=1e-2)
    code, out = run(tmp_path, "integrate", "--grid", "64", "--dim", "8", "--integrand", "2*t", name="expr")
    assert code == 0
    code, _ = run(tmp_path, "integrate", "--integrand", "t +* 2", name="bad")
    assert code == 1


def test_solve_evolution(tmp_path):
    code, out = run(tmp_path, "solve-evolution", "--grid", "32", "--xgrid", "32", "--order", "2", "--dim", "4")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["holds"] is True
    assert len(summary["energy"]["ratio"]) == 3


def test_mc_validate_covariance_fbm(tmp_path):
    code, out = run(tmp_path, "mc-validate", "--target", "covariance", "--kernel", "fbm", "--H", "0.75",
                    "--n-paths", "20000")
    assert code == 0
    for r in read_csv(out / "mc.csv"):
        if r["quantity"] == "var":
            assert abs(float(r["estimate"]) - float(r["t"]) ** 1.5) <= 3 * float(r["se"]) + 1e-4
            assert r["pass"] == "true"


def test_manifest_rerun_is_bitwise(tmp_path):
    code, out = run(tmp_path, "mc-validate", "--target", "wick-exp", "--dim", "8", "--n-paths", "5000", "--seed", "9")
    assert code == 0
    first = (out / "mc.csv").read_bytes()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 9 and "numpy" in manifest["versions"] and "total_s" in manifest["timings"]
    assert main(["mc-validate", "--config", str(out / "manifest.json")]) == 0
    assert (out / "mc.csv").read_bytes() == first
