import json

import pytest

from cli.commands import EXIT_INPUT, EXIT_NEGATIVE, EXIT_NUMERICAL, EXIT_OK, main, parse_run
from core.config import ENV_OVERRIDES, default_config

from tests.test_ltflpi import NON_INVOLUTIVE


@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for variable in ENV_OVERRIDES:
        monkeypatch.delenv(variable, raising=False)


@pytest.fixture
def non_involutive_path(tmp_path):
    path = tmp_path / "non_involutive.sys"
    path.write_text(NON_INVOLUTIVE)
    return path


def report_of(capsys):
    return json.loads(capsys.readouterr().out)


def test_parse_run_joins_check_problems(motivating_path):
    run = parse_run(["check", "gtflpi", str(motivating_path), "--grid", "5", "--cylinder"])
    assert run.command == "check gtflpi"
    assert run.grid == 5
    assert run.cylinder
    assert run.meta


def test_validate(motivating_path, capsys):
    assert main(["validate", str(motivating_path)]) == EXIT_OK
    payload = report_of(capsys)
    assert payload["schema"] == 1
    assert payload["command"] == "validate"
    assert payload["report"]["passed"]
    assert payload["meta"]["version"] == "0.1.0"


def test_check_ltflpi(motivating_path, capsys):
    assert main(["check", "ltflpi", str(motivating_path), "--no-meta"]) == EXIT_OK
    payload = report_of(capsys)
    assert "meta" not in payload
    report = payload["report"]
    assert report["solvable"]
    assert report["mu"] == 2
    assert "commuting" in report


def test_check_ltflpi_negative(non_involutive_path, capsys):
    assert main(["check", "ltflpi", str(non_involutive_path)]) == EXIT_NEGATIVE
    assert not report_of(capsys)["report"]["solvable"]


def test_check_gtflpi_negative(non_involutive_path, capsys):
    assert main(["check", "gtflpi", str(non_involutive_path), "--grid", "4"]) == EXIT_NEGATIVE
    assert report_of(capsys)["report"]["verdict"] == "sufficient-fail"


def test_reldeg_of_file_output(motivating_path, capsys):
    assert main(["reldeg", str(motivating_path)]) == EXIT_OK
    assert report_of(capsys)["report"]["lambda"] == "y2*exp(-y1)"


def test_reldeg_of_wrong_output(motivating_path, capsys):
    assert main(["reldeg", str(motivating_path), "--lambda", "x4"]) == EXIT_NEGATIVE
    report = report_of(capsys)["report"]
    assert report["lambda"] == "x4"
    assert not report["passed"]


def test_normalform(motivating_path, capsys):
    assert main(["normalform", str(motivating_path)]) == EXIT_OK
    report = report_of(capsys)["report"]
    assert report["r"] == 3
    assert report["a2_at_x0"] == pytest.approx(1.0)


def test_normalform_rejects_wrong_degree(motivating_path, capsys):
    assert main(["normalform", str(motivating_path), "--lambda", "x1"]) == EXIT_INPUT
    assert "error" in capsys.readouterr().err


def test_construct(motivating_path, tmp_path):
    out = tmp_path / "chart.json"
    assert main(["construct", str(motivating_path), "--json", str(out), "--pretty"]) == EXIT_OK
    payload = json.loads(out.read_text())
    assert payload["command"] == "construct"
    assert payload["report"]["verification"]["passed"]
    assert payload["report"]["chart"]["lambda_index"] == 0


def test_simulate_writes_csv(motivating_path, tmp_path, capsys):
    csv_path = tmp_path / "traj.csv"
    code = main(["simulate", str(motivating_path), "--T", "0.5", "--out", str(csv_path)])
    assert code == EXIT_OK
    report = report_of(capsys)["report"]
    assert report["csv"] == str(csv_path)
    assert report["blowup"] is None
    assert csv_path.read_text().startswith("t,x1,x2,x3,x4,x5,xihat_1")
    assert report["full_information"]["blowup"] is None
    assert set(report["full_information"]) == {
        "final_transverse_norm", "max_transverse_norm", "final_gamma_residual", "saturated_steps", "blowup",
    }


def test_simulate_blowup_exits_numerical(motivating_path, tmp_path, capsys):
    config_path = tmp_path / "small_blowup.json"
    config_path.write_text(json.dumps({"observer": {"blowup_norm": 5.0}}))
    code = main(["simulate", str(motivating_path), "--config", str(config_path)])
    assert code == EXIT_NUMERICAL
    captured = capsys.readouterr()
    assert json.loads(captured.out)["report"]["blowup"] is not None
    assert "numerical failure" in captured.err


def test_samples_flag_reaches_every_sample_count(motivating_path):
    run = parse_run(["validate", str(motivating_path), "--samples", "7"])
    sampling = run.configure(default_config())["sampling"]
    assert (sampling["set_count"], sampling["ball_count"], sampling["validate_count"]) == (7, 7, 7)


def test_no_meta_output_is_reproducible(motivating_path, tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    for out in (first, second):
        assert main(["check", "ltflpi", str(motivating_path), "--no-meta", "--json", str(out)]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()


def test_missing_file(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "absent.sys")]) == EXIT_INPUT
    assert "error" in capsys.readouterr().err


def test_malformed_file(tmp_path):
    path = tmp_path / "broken.sys"
    path.write_text("[vars] x1\n[f]\nx1 +\n")
    assert main(["validate", str(path)]) == EXIT_INPUT


@pytest.mark.parametrize(
    "argv",
    [
        ["check", "ltflpi", "{path}", "--samples", "0"],
        ["check", "ltflpi", "{path}", "--frame-mode", "rotating"],
        ["check", "everything", "{path}"],
        [],
    ],
)
def test_usage_errors(argv, motivating_path):
    argv = [a.format(path=motivating_path) for a in argv]
    assert main(argv) == EXIT_INPUT
