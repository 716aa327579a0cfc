import io
import json
import math

import pandas as pd
import pytest
import yaml
from click.testing import CliRunner

from choquetrl.main import cli, main
from choquetrl.runlog import RUN_HISTORY, log_dir

BENCHMARK_FLAGS = [
    "--A", "0", "--B", "1", "--C", "0", "--D", "0", "--M", "1",
    "--R", "0", "--N", "1", "--P", "0", "--L", "0", "--rho", "2", "--lambda", "1",
]

MODEL_CFG = """\
[model]
A = 0
B = 1
C = 0
D = 0
M = 1
R = 0
N = 1
P = 0
L = 0
rho = 2
lambda = 1
"""


@pytest.fixture
def runner():
    return CliRunner()


def _json(result):
    assert result.exit_code == 0, result.output
    return json.loads(result.stdout)


def test_maximize_gini(runner):
    payload = _json(runner.invoke(cli, ["maximize", "--distortion", "gini", "--mean", "0", "--std", "1"]))
    assert payload["max_value"] == pytest.approx(1.0 / math.sqrt(3.0), abs=1e-12)
    assert payload["law"] == "uniform"
    runs = json.loads((log_dir() / RUN_HISTORY).read_text())
    assert runs[-1]["command"] == "maximize"


def test_maximize_csv_to_stdout(runner):
    result = runner.invoke(cli, ["maximize", "--distortion", "gini", "--mean", "0", "--std", "1", "--output", "csv"])
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(io.StringIO(result.stdout))
    assert list(frame.columns) == ["p", "q"]
    assert frame["q"][0] == pytest.approx(-math.sqrt(3.0), abs=1e-12)
    assert frame["p"].iloc[-1] == 1.0


def test_maximize_with_oracle(runner):
    args = ["maximize", "--distortion", "eps-greedy", "--param", "eps=0.3", "--mean", "0", "--std", "1"]
    payload = _json(runner.invoke(cli, [*args, "--oracle", "--trials", "300", "--seed", "4"]))
    assert payload["oracle"]["passed"] is True
    assert payload["oracle"]["trials"] == 300
    assert payload["max_value"] == pytest.approx(math.sqrt(0.21))


def test_maximize_from_yaml_config(runner, tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump({"command": "maximize", "distortion": "gini", "constraint": {"mean": 0, "std": 2}}))
    payload = _json(runner.invoke(cli, ["maximize", "--config", str(path)]))
    assert payload["max_value"] == pytest.approx(2.0 / math.sqrt(3.0))
    overridden = _json(runner.invoke(cli, ["maximize", "--config", str(path), "--std", "3"]))
    assert overridden["max_value"] == pytest.approx(3.0 / math.sqrt(3.0))


def test_validate_exit_codes(runner, tmp_path):
    assert runner.invoke(cli, ["validate", "--distortion", "inter-es", "--param", "alpha=0.75"]).exit_code == 0
    nodes = tmp_path / "nodes.csv"
    nodes.write_text("p,h\n0,0\n0.3,0.1\n0.6,0.4\n1,0\n")
    assert runner.invoke(cli, ["validate", "--file", str(nodes)]).exit_code == 2


def test_eval_json_and_table(runner, tmp_path):
    law = '{"kind": "uniform", "a": -1, "b": 1}'
    payload = _json(runner.invoke(cli, ["eval", "--distortion", "gini", "--distribution", law]))
    assert payload["phi"] == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert payload["route"] == "quantile"
    table = tmp_path / "law.csv"
    table.write_text("p,q\n0,-1\n1,1\n")
    from_table = _json(runner.invoke(cli, ["eval", "--distortion", "gini", "--table", str(table)]))
    assert from_table["phi"] == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_solve_lq_benchmark(runner, tmp_path):
    out = tmp_path / "policy.csv"
    args = ["solve-lq", "--distortion", "gini", *BENCHMARK_FLAGS, "--x", "1", "--output-path", str(out)]
    payload = _json(runner.invoke(cli, args))
    assert payload["k2"] == pytest.approx(1.0 - math.sqrt(2.0), abs=1e-12)
    assert payload["k0"] == pytest.approx(1.0 / 12.0, abs=1e-12)
    assert payload["V"]["1.0"] == pytest.approx((1.0 - math.sqrt(2.0)) / 2.0 + 1.0 / 12.0)
    assert max(abs(r) for r in payload["residuals"]) < 1e-12
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["p", "q"]
    assert frame["q"].iloc[-1] == pytest.approx(1.0 - math.sqrt(2.0) + 1.0, abs=1e-9)


def test_solve_lq_reports_ill_posed_models(runner):
    flags = [*BENCHMARK_FLAGS]
    flags[flags.index("--N") + 1] = "0"
    result = runner.invoke(cli, ["solve-lq", "--distortion", "gini", *flags])
    assert result.exit_code == 2


def test_simulate_writes_checkpoints(runner, tmp_path):
    checkpoints = tmp_path / "ck.csv"
    args = [
        "simulate", "--distortion", "gini", *BENCHMARK_FLAGS, "--x0", "1", "--dt", "0.01",
        "--paths", "4", "--checkpoints-path", str(checkpoints),
    ]
    payload = _json(runner.invoke(cli, args))
    assert payload["transversality_passed"] is True
    assert payload["value_estimate"] == pytest.approx(payload["closed_form"], rel=0.02, abs=1e-3)
    assert payload["n_paths"] == 4
    frame = pd.read_csv(checkpoints)
    assert list(frame.columns) == ["T", "discounted_second_moment"]
    assert len(frame) == 10
    assert frame["T"].iloc[-1] == pytest.approx(10.0)


def test_compare_with_model_file(runner, tmp_path):
    model = tmp_path / "model.cfg"
    model.write_text(MODEL_CFG)
    args = ["compare", "--distortions", "gini,cre", "--model", str(model), "--x", "0,1", "--output", "csv"]
    result = runner.invoke(cli, args)
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(io.StringIO(result.stdout))
    assert list(frame.columns) == ["distortion", "x", "mu_star", "var_star", "V"]
    assert list(frame["distortion"]) == ["gini", "gini", "cre", "cre"]
    assert frame["var_star"][0] == pytest.approx(1.0 / 3.0)


def test_compare_flags_override_the_model_file(runner, tmp_path):
    model = tmp_path / "model.cfg"
    model.write_text(MODEL_CFG)
    args = ["compare", "--distortions", "gini", "--model", str(model), "--lambda", "2", "--x", "0", "--output", "csv"]
    result = runner.invoke(cli, args)
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(io.StringIO(result.stdout))
    assert frame["var_star"][0] == pytest.approx(4.0 / 3.0)


def test_info_lists_tags(runner):
    result = runner.invoke(cli, ["info"])
    assert result.exit_code == 0
    for tag in ("gini", "inter-es", "piecewise", "normal", "compare"):
        assert tag in result.output


def test_no_log_skips_history(runner):
    result = runner.invoke(cli, ["--no-log", "maximize", "--distortion", "cre", "--mean", "0", "--std", "1"])
    assert result.exit_code == 0
    assert not (log_dir() / RUN_HISTORY).exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["maximize", "--bogus"],
        ["maximize", "--distortion", "gini"],
        ["maximize", "--distortion", "gini", "--mean", "0", "--std", "-1"],
        ["eval", "--distortion", "entropy", "--distribution", '{"kind": "normal", "mu": 0, "var": 1}'],
        ["eval", "--distortion", "gini", "--distribution", "{broken"],
        ["eval", "--distortion", "gini", "--distribution", '{"kind": "uniform", "a": 0, "b": 1}', "--output", "csv"],
        ["validate", "--param", "eps=0.1"],
    ],
)
def test_usage_errors_exit_with_one(argv, capsys):
    assert main(argv) == 1
    assert capsys.readouterr().err


def test_main_success_and_check_failure(tmp_path, capsys):
    assert main(["maximize", "--distortion", "gini", "--mean", "0", "--std", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["law"] == "uniform"
    nodes = tmp_path / "nodes.csv"
    nodes.write_text("p,h\n0,0\n0.5,0.5\n1,0.2\n")
    assert main(["validate", "--file", str(nodes)]) == 2


def test_config_for_another_command_is_rejected(tmp_path, capsys):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump({"command": "eval", "distortion": "gini"}))
    assert main(["maximize", "--config", str(path)]) == 1
    assert "not 'maximize'" in capsys.readouterr().err
