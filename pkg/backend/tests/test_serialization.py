import json

import numpy as np
import pytest

from src.core.error_handlers import ConfigurationError
from src.domain.entities.certificate import AffineForm, DualCertificate
from src.domain.entities.protocol import Score
from src.infrastructure.channel.channel_model import honest_statistics
from src.infrastructure.numerics.special_math import gauss_radau
from src.infrastructure.operators.operator_export import (
    MAGIC,
    dump_operators,
    read_operator_file,
    write_operator_file,
)
from src.infrastructure.operators.protocol_operators import build_truncated_operators
from src.infrastructure.sdp.dimension_reduction import build_corrections, default_linearisation_points
from src.infrastructure.sdp.entropy_sdp import build_problem
from src.infrastructure.sdp.serialization import (
    certificate_from_dict,
    certificate_to_dict,
    dump_json,
    load_json,
    matrix_from_dict,
    matrix_to_dict,
    problem_to_dict,
)


@pytest.fixture
def certificate():
    return DualCertificate(
        multipliers={"norm": 0.5, "lower:top": 0.25},
        constraint_forms={"norm": AffineForm.create(0.0, top=3.0), "lower:top": AffineForm.create(-0.1, top=1.0)},
        phi=0.9,
        slack_min=-1e-3,
        blocks={"S12": np.array([[0.1 + 0.2j, 0.0], [0.0, -0.3j]])},
        dual_value=0.8,
        primal_value=0.81,
        solver="cvxpy/SCS",
        status="optimal",
        residuals={"gap": 0.01},
    )


def test_matrix_dict_keeps_complex_entries():
    matrix = np.array([[1.0, 2.0 - 1.0j], [2.0 + 1.0j, -0.5]])
    assert np.array_equal(matrix_from_dict(matrix_to_dict(matrix)), matrix)
    with pytest.raises(ConfigurationError):
        matrix_from_dict({"shape": [3, 3], "real": [0.0] * 4, "imag": [0.0] * 4})


def test_certificate_record(certificate, tmp_path):
    path = dump_json(certificate_to_dict(certificate), tmp_path / "nested" / "certificate.json")
    restored = certificate_from_dict(load_json(path))
    assert restored.multipliers == certificate.multipliers
    assert restored.phi == certificate.phi
    assert restored.primal_value == certificate.primal_value
    assert np.array_equal(restored.blocks["S12"], certificate.blocks["S12"])
    assert restored.value_at(np.full(9, 1 / 9)) == pytest.approx(certificate.value_at(np.full(9, 1 / 9)))


def test_certificate_record_is_checked(certificate):
    record = certificate_to_dict(certificate)
    with pytest.raises(ConfigurationError):
        certificate_from_dict({**record, "kind": "entropy_sdp_problem"})
    with pytest.raises(ConfigurationError):
        certificate_from_dict({**record, "format": 99})


def test_load_json_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_json(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_json(broken)


def test_problem_record(small_params, channel):
    operators = build_truncated_operators(small_params)
    statistics = honest_statistics(small_params, channel)
    points = default_linearisation_points(statistics.scores[Score.TOP], operators.kappa)
    corrections = build_corrections(operators.kappa, points, small_params.d_z)
    problem = build_problem(operators, gauss_radau(2), statistics.scores, corrections, small_params.test_probability)

    record = json.loads(json.dumps(problem_to_dict(problem)))
    assert record["kind"] == "entropy_sdp_problem"
    assert record["scalars"]["kappa"] == pytest.approx(operators.kappa)
    assert record["quadrature"]["nodes"][-1] == 1.0
    assert len([name for name in record["matrices"] if name.startswith("test_")]) == 9
    assert np.allclose(matrix_from_dict(record["matrices"]["post_selection"]), operators.post_selection)
    assert set(record["constraint_forms"]) == set(problem.constraint_forms)


def test_operator_file(tmp_path):
    matrix = np.array([[1.0, 0.5j, 0.0], [-0.5j, 2.0, 0.1], [0.0, 0.1, 3.0]])
    path = write_operator_file(tmp_path / "m.op", matrix, "hermitian")
    assert path.read_bytes().startswith(MAGIC.encode())
    label, restored = read_operator_file(path)
    assert label == "hermitian"
    assert np.array_equal(restored, matrix)


def test_operator_file_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        write_operator_file(tmp_path / "bad.op", np.zeros((2, 3)), "bad")
    (tmp_path / "foreign.op").write_bytes(b"# something else\n\n\x00")
    with pytest.raises(ConfigurationError):
        read_operator_file(tmp_path / "foreign.op")
    path = write_operator_file(tmp_path / "cut.op", np.eye(3), "cut")
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ConfigurationError):
        read_operator_file(path)


def test_dump_operators_names(small_params, tmp_path):
    written = dump_operators(build_truncated_operators(small_params), tmp_path)
    names = sorted(p.stem for p in written)
    assert len(names) == 16
    assert {"key_0", "key_3", "key_none", "post_selection", "alice_marginal", "test_top", "test_inner2"} <= set(names)
