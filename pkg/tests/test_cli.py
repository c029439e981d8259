import csv
import io
import json
import math
import shutil
import subprocess

import numpy as np
import pytest

from conformal_bound.cli import CampaignConfig, UsageError, main, parse_range
from conformal_bound.measure import grid
from conformal_bound.metric import ConformalMetric
from conformal_bound.topology import icosphere, write_map_csv


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_constants_table(capsys):
    assert main(["constants", "--n", "2..10"]) == 0
    rows = rows_of(capsys.readouterr().out)
    assert len(rows) == 9
    assert abs(float(rows[0]["K_n"]) - 1) < 1e-12
    assert float(rows[0]["theorem_bound"]) == pytest.approx(16 * math.pi, rel=1e-14)
    assert all(1 < float(r["K_n"]) <= 1.04 for r in rows[1:])


def test_constants_single(capsys):
    assert main(["constants", "--n", "2"]) == 0
    rows = rows_of(capsys.readouterr().out)
    assert len(rows) == 1 and abs(float(rows[0]["K_n"]) - 1) <= 1e-12


@pytest.mark.parametrize("bad", ["x", "5..3", "1", "0..4"])
def test_bad_arguments_exit_2(bad, capsys):
    assert main(["constants", "--n", bad]) == 2


def test_parse_range():
    assert parse_range("3..5") == [3, 4, 5]
    with pytest.raises(UsageError):
        parse_range("a..b")


def test_config_validation(tmp_path):
    with pytest.raises(UsageError):
        CampaignConfig(n=4).validate()
    with pytest.raises(UsageError):
        CampaignConfig(tol=0.0).validate()
    (tmp_path / "c.json").write_text(json.dumps({"n": 2, "bogus": 1}))
    with pytest.raises(UsageError):
        CampaignConfig.from_sources(tmp_path / "c.json")
    (tmp_path / "c.json").write_text(json.dumps({"n": 3, "count": 2, "seed": 11}))
    cfg = CampaignConfig.from_sources(tmp_path / "c.json", count=1)
    assert cfg.n == 3 and cfg.count == 1 and cfg.seed == 11
    labels = [label for label, _ in cfg.metric_sources()]
    assert labels == ["seed11_000"]


def test_certify_round_metric_and_determinism(tmp_path):
    ConformalMetric.round(2).to_json(tmp_path / "round.json")
    outputs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        code = main(["certify", "--metric", str(tmp_path / "round.json"), "--out", str(out)])
        assert code == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    configs = [json.loads(o.pop("config.json")) for o in outputs]
    assert configs[0].pop("out") != configs[1].pop("out")
    assert configs[0] == configs[1]
    assert outputs[0] == outputs[1]
    summary = rows_of(outputs[0]["summary.csv"].decode())
    assert summary[0]["branch"] == "metric-multiple" and summary[0]["passed"] == "True"
    cert = json.loads(outputs[0]["round.certificate.json"])
    assert cert["minmax_value"] <= 8 * math.pi + 1e-8


def test_certify_rejects_bad_config(tmp_path):
    assert main(["certify", "--n", "5", "--out", str(tmp_path)]) == 2
    assert main(["certify", "--metric", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    assert not (tmp_path / "summary.csv").exists()


@pytest.mark.slow
def test_certify_campaign_seed7(tmp_path):
    out = tmp_path / "camp"
    assert main(["certify", "--n", "2", "--seed", "7", "--count", "20", "--out", str(out)]) == 0
    rows = rows_of((out / "summary.csv").read_text())
    assert len(rows) == 20
    for r in rows:
        assert r["passed"] == "True"
        assert float(r["margin_theorem"]) > 0
        assert float(r["solver_lambda2"]) <= float(r["minmax_value"]) + 1e-6
        assert float(r["minmax_value"]) < 16 * math.pi


def test_lift_scan_round_metric(capsys):
    assert main(["lift-scan", "--round"]) == 0
    rows = rows_of(capsys.readouterr().out)
    assert [r["status"] for r in rows] == ["multiple:metric"]


def test_lift_scan_random_metric(tmp_path):
    out = tmp_path / "scan.csv"
    code = main(["lift-scan", "--seed", "0", "--p", "0,1,0", "--samples", "8", "--out", str(out)])
    assert code == 0
    rows = rows_of(out.read_text())
    assert len(rows) == 8 and all(r["status"] == "ok" for r in rows)
    assert float(rows[0]["r"]) == pytest.approx(-0.99)
    assert float(rows[0]["s0"]) < -0.99
    assert max(float(r["claim1_residual"]) for r in rows) <= 1e-6
    s = np.array([[float(r[f"s{i}"]) for i in range(3)] for r in rows])
    assert np.all(np.sum(s[1:] * s[:-1], axis=1) > 0)


def test_lift_scan_validates_before_work():
    assert main(["lift-scan", "--p", "1,0", "--seed", "0"]) == 2
    assert main(["lift-scan", "--r-min", "0.5", "--r-max", "0.1"]) == 2


@pytest.mark.parametrize("name,n,expected", [("identity", 2, 1), ("antipodal", 3, 1), ("antipodal", 2, -1), ("rotation", 2, 1)])
def test_degree_builtin(name, n, expected, capsys):
    assert main(["degree", "--builtin", name, "--n", str(n)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["degree"] == expected
    assert rep["odd_or_one"] is True


def test_degree_unknown_builtin():
    assert main(["degree", "--builtin", "nope"]) == 2


def test_degree_from_lift_samples(tmp_path, capsys):
    p = icosphere(3).nodes
    values = -p.copy()
    values[:5] = np.nan
    write_map_csv(tmp_path / "lift.csv", p, values)
    assert main(["degree", "--from-lift", str(tmp_path / "lift.csv")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["degree"] == -1 and "multiple" in rep["note"]
    assert rep["preimage_degree"] == -1


def test_degree_non_integer_exit_3(tmp_path):
    # samples on one hemisphere only: the interpolant is undefined elsewhere
    p = icosphere(3).nodes
    p = p[p[:, 2] > 0.3]
    write_map_csv(tmp_path / "half.csv", p, p)
    code = main(["degree", "--from-lift", str(tmp_path / "half.csv"), "--out", str(tmp_path / "d.json")])
    assert code == 3
    assert "error" in json.loads((tmp_path / "d.json").read_text())


def test_renormalize_measure(tmp_path, capsys):
    from conformal_bound.measure import pushforward

    nu = pushforward(grid(2, 20).as_measure(), np.array([0.0, 0.4, 0.0]))
    nu.to_csv(tmp_path / "m.csv")
    assert main(["renormalize", "--measure", str(tmp_path / "m.csv")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert np.allclose(rep["xi"], [0.0, -0.4, 0.0], atol=1e-8)
    assert rep["residual"] <= 1e-10


def test_renormalize_metric(capsys):
    assert main(["renormalize", "--n", "3", "--seed", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["residual"] <= 1e-10


@pytest.mark.skipif(shutil.which("conformal-bound") is None, reason="console script not installed")
def test_console_script():
    out = subprocess.run(["conformal-bound", "constants", "--n", "3"], capture_output=True, text=True, check=True)
    assert out.stdout.startswith("n,sigma_n,K_n")
