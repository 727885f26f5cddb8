import json

import numpy as np
import pytest

from src.cli import EXIT_KEYRATE_ERROR, EXIT_OK, main
from src.core.run_config import load_run_config
from src.domain.entities.protocol import Score
from src.infrastructure.operators.operator_export import read_operator_file
from src.infrastructure.operators.protocol_operators import build_truncated_operators
from src.infrastructure.repositories.result_repository import CsvResultRepository
from src.infrastructure.sdp.serialization import certificate_from_dict, load_json


def test_dump_operators(small_config, tmp_path, capsys):
    target = tmp_path / "ops"
    assert main(["dump-operators", "--config", str(small_config), "--output", str(target), "--quiet"]) == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert len(printed["files"]) == 16

    operators = build_truncated_operators(load_run_config(small_config).protocol_params())
    assert printed["kappa"] == pytest.approx(operators.kappa)
    label, matrix = read_operator_file(target / "test_top.op")
    assert label == "test_top"
    assert np.array_equal(matrix, operators.test_povms[Score.TOP])
    _, marginal = read_operator_file(target / "alice_marginal.op")
    assert np.array_equal(marginal, operators.alice_marginal)


def test_simulate(small_config, tmp_path, capsys):
    output = tmp_path / "completeness.json"
    code = main(["simulate", "--config", str(small_config), "--trials", "200", "--samples", "20000",
                 "--output", str(output), "--quiet"])
    assert code == EXIT_OK
    record = json.loads(output.read_text())
    assert record["trials"] == 200
    assert record["budget"] == 0.1
    assert record["ci_low"] <= 0.1
    assert set(record["frequencies"]) >= {"top", "bottom", "0"}
    assert json.loads(capsys.readouterr().out) == record


def test_invalid_config_reports_configuration_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"protocol": {"n_max": 0}}))
    assert main(["dump-operators", "--config", str(path), "--quiet"]) == EXIT_KEYRATE_ERROR
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "ConfigurationError"


def test_missing_config_file(tmp_path, capsys):
    assert main(["selftest", "--config", str(tmp_path / "absent.json"), "--quiet"]) == EXIT_KEYRATE_ERROR
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "ConfigurationError"


def test_unknown_command_exits():
    with pytest.raises(SystemExit):
        main(["teleport"])


@pytest.mark.slow
def test_keyrate_with_sdp_dump(small_config, tmp_path, capsys):
    snapshot = tmp_path / "sdp"
    report_path = tmp_path / "report.json"
    code = main(["keyrate", "--config", str(small_config), "--dump-sdp", str(snapshot),
                 "--output", str(report_path), "--quiet"])
    assert code == EXIT_OK
    report = json.loads(report_path.read_text())
    assert report["mode"] == "finite"
    assert report["key_length"] >= 0
    certificate = certificate_from_dict(load_json(snapshot / "certificate.json"))
    assert certificate.dual_value == pytest.approx(report["entropy_bound"])
    problem = load_json(snapshot / "problem.json")
    assert problem["kind"] == "entropy_sdp_problem"


@pytest.mark.slow
def test_asymptotic_sweep_writes_csv_and_sidecar(small_config, tmp_path, capsys):
    out = tmp_path / "results"
    assert main(["sweep", "--config", str(small_config), "--output", str(out), "--quiet"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["failed"] == 0
    frame, metadata = CsvResultRepository(out).load(summary["run"])
    assert len(frame) == 2
    assert list(frame["loss_db"]) == [0.0, 1.0]
    assert set(frame["mode"]) == {"asymptotic"}
    assert metadata["config"]["seed"] is not None


@pytest.mark.slow
def test_sweep_rate_does_not_increase_with_loss(small_config, tmp_path, capsys):
    config = json.loads(small_config.read_text())
    config["sweep"]["losses_db"] = [0.0, 0.5, 1.0, 2.0, 4.0]
    small_config.write_text(json.dumps(config))
    out = tmp_path / "results"
    assert main(["sweep", "--config", str(small_config), "--output", str(out), "--quiet"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    frame, _ = CsvResultRepository(out).load(summary["run"])
    frame = frame.sort_values("loss_db")
    rates = frame["rate"].tolist()
    assert all(later <= earlier + 1e-9 for earlier, later in zip(rates, rates[1:]))
    assert (frame["rate"] >= 0.0).all()


@pytest.mark.slow
def test_selftest(small_config, capsys):
    assert main(["selftest", "--config", str(small_config), "--quiet"]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["failed"] == []
