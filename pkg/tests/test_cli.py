import csv
import json

import numpy as np
import pytest

from cgnf.cli import main
from cgnf.dag import two_wave_dag


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--setting", "a", "--n", "400", "--seed", "1",
                 "--out", str(d / "data.csv"), "--noise-out", str(d / "noise.csv")]) == 0
    assert main(["train", "--data", str(d / "data.csv"), "--model", str(d / "model.json"),
                 "--max-epochs", "3", "--log-out", str(d / "train.json")]) == 0
    return d


def _json(path):
    return json.loads(path.read_text())


def test_ate_and_do(workdir):
    assert main(["ate", "--model", str(workdir / "model.json"), "--mc-samples", "200",
                 "--out", str(workdir / "ate.json")]) == 0
    assert set(_json(workdir / "ate.json")) >= {"l10", "l01", "l11"}
    assert main(["ate", "--model", str(workdir / "model.json"), "--mc-samples", "100", "--do", "A1=1,A2=0",
                 "--out", str(workdir / "do.json")]) == 0


def test_baselines(workdir):
    assert main(["baselines", "--data", str(workdir / "data.csv"), "--out", str(workdir / "b.json")]) == 0
    assert set(_json(workdir / "b.json")) == {"ipw", "rwr", "gcom", "gcom_theta"}


def test_counterfactual_and_policy(workdir):
    assert main(["counterfactual", "--model", str(workdir / "model.json"), "--data", str(workdir / "data.csv"),
                 "--rows", "0,1", "--noise", str(workdir / "noise.csv"), "--setting", "a",
                 "--out", str(workdir / "cf.json")]) == 0
    assert main(["policy", "--model", str(workdir / "model.json"), "--data", str(workdir / "data.csv"),
                 "--noise", str(workdir / "noise.csv"), "--setting", "a",
                 "--out", str(workdir / "pol.json")]) == 0
    pol = _json(workdir / "pol.json")
    assert np.array(pol["combined"]["confusion"]).shape == (4, 4)
    assert pol["combined"]["n"] == 80


def test_policy_without_sidecar_exits_1(workdir):
    assert main(["policy", "--model", str(workdir / "model.json"), "--data", str(workdir / "data.csv"),
                 "--setting", "a"]) == 1


def test_surface_shape_oracle_and_determinism(workdir):
    args = ["surface", "--model", str(workdir / "model.json"), "--arm", "1,1", "--setting", "a"]
    assert main(args + ["--out", str(workdir / "s1.csv")]) == 0
    assert main(args + ["--out", str(workdir / "s2.csv")]) == 0
    rows = list(csv.reader((workdir / "s1.csv").open()))
    assert rows[0] == ["z_c1", "z_c2", "a1", "a2", "y", "y_oracle"]
    assert len(rows) - 1 == 3721
    assert (workdir / "s1.csv").read_bytes() == (workdir / "s2.csv").read_bytes()


def test_oracle_subcommand(tmp_path):
    assert main(["oracle", "--fixture", "kwave3", "--do", "A1=1,A2=0,A3=1", "--mc", "1000",
                 "--out", str(tmp_path / "o.json")]) == 0
    assert main(["oracle", "--out", str(tmp_path / "o2.json")]) == 0


def test_usage_errors_exit_1(workdir, tmp_path, capsys):
    assert main(["ate", "--model", str(tmp_path / "missing.json")]) == 1
    assert main(["ate", "--model", str(workdir / "model.json"), "--do", "A1=7"]) == 1
    assert main(["simulate", "--n", "10"]) == 1
    assert main(["bogus"]) == 1
    assert main(["surface", "--model", str(workdir / "model.json"), "--grid", "0:1"]) == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numerical_failure_exits_2(workdir, tmp_path):
    model = _json(workdir / "model.json")
    model["integrand"]["params"][-1] = [[[float("nan")]] for _ in range(5)]
    (tmp_path / "bad.json").write_text(json.dumps(model))
    assert main(["ate", "--model", str(tmp_path / "bad.json"), "--mc-samples", "10"]) == 2


def test_benchmark_determinism(tmp_path):
    args = ["benchmark", "--settings", "a", "--sizes", "200", "--seeds", "2", "--mc-samples", "100",
            "--max-epochs", "1", "--patience", "1"]
    assert main(args + ["--out", str(tmp_path / "r1")]) == 0
    assert main(args + ["--out", str(tmp_path / "r2")]) == 0
    for name in ("report.json", "report.csv"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
