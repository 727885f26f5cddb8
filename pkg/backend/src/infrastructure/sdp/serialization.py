import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from src.core.error_handlers import ConfigurationError
from src.domain.entities.certificate import AffineForm, DualCertificate
from src.domain.entities.protocol import TEST_SCORES
from src.infrastructure.sdp.entropy_sdp import EntropySdpProblem

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def matrix_to_dict(matrix: np.ndarray) -> Dict[str, Any]:
    matrix = np.asarray(matrix, dtype=complex)
    return {"shape": list(matrix.shape), "real": matrix.real.ravel().tolist(), "imag": matrix.imag.ravel().tolist()}


def matrix_from_dict(data: Dict[str, Any]) -> np.ndarray:
    shape = tuple(data["shape"])
    real = np.asarray(data["real"], dtype=float)
    imag = np.asarray(data["imag"], dtype=float)
    if real.size != int(np.prod(shape)) or imag.size != real.size:
        raise ConfigurationError(f"matrix planes do not match shape {shape}")
    return (real + 1j * imag).reshape(shape)


def problem_to_dict(problem: EntropySdpProblem) -> Dict[str, Any]:
    """Named matrices and scalars describing one SDP instance."""
    ops = problem.operators
    matrices = {f"test_{c.value}": matrix_to_dict(ops.test_povms[c]) for c in TEST_SCORES}
    matrices.update({f"key_{z}": matrix_to_dict(m) for z, m in ops.key_povms.items()})
    matrices["post_selection"] = matrix_to_dict(ops.post_selection)
    matrices["alice_marginal"] = matrix_to_dict(ops.alice_marginal)
    corrections = problem.corrections
    return {
        "format": FORMAT_VERSION,
        "kind": "entropy_sdp_problem",
        "scalars": {
            "n_max": ops.n_max,
            "kappa": ops.kappa,
            "test_probability": problem.test_probability,
            "nu_c": corrections.points.nu_c,
            "nu_L": corrections.points.nu_l,
            "nu_U": corrections.points.nu_u,
            "m_corr": corrections.m_corr,
            "c_corr": corrections.c_corr,
        },
        "quadrature": {"nodes": list(problem.rule.nodes), "weights": list(problem.rule.weights)},
        "statistics": {c.value: problem.statistics[c] for c in TEST_SCORES},
        "constraint_forms": {name: form.to_dict() for name, form in problem.constraint_forms.items()},
        "row_scales": {c.value: s for c, s in problem.row_scales.items()},
        "matrices": matrices,
    }


def certificate_to_dict(certificate: DualCertificate) -> Dict[str, Any]:
    return {
        "format": FORMAT_VERSION,
        "kind": "dual_certificate",
        "scalars": {
            "phi": certificate.phi,
            "slack_min": certificate.slack_min,
            "dual_value": certificate.dual_value,
            "primal_value": certificate.primal_value,
        },
        "solver": certificate.solver,
        "status": certificate.status,
        "multipliers": dict(certificate.multipliers),
        "constraint_forms": {name: form.to_dict() for name, form in certificate.constraint_forms.items()},
        "residuals": dict(certificate.residuals),
        "matrices": {name: matrix_to_dict(m) for name, m in certificate.blocks.items()},
    }


def certificate_from_dict(data: Dict[str, Any]) -> DualCertificate:
    if data.get("kind") != "dual_certificate":
        raise ConfigurationError(f"not a certificate record (kind={data.get('kind')!r})")
    if data.get("format") != FORMAT_VERSION:
        raise ConfigurationError(f"unsupported certificate format {data.get('format')!r}")
    scalars = data["scalars"]
    return DualCertificate(
        multipliers={k: float(v) for k, v in data["multipliers"].items()},
        constraint_forms={k: AffineForm.from_dict(v) for k, v in data["constraint_forms"].items()},
        phi=float(scalars["phi"]),
        slack_min=float(scalars["slack_min"]),
        blocks={k: matrix_from_dict(v) for k, v in data["matrices"].items()},
        dual_value=float(scalars["dual_value"]),
        primal_value=None if scalars.get("primal_value") is None else float(scalars["primal_value"]),
        solver=data.get("solver", ""),
        status=data.get("status", ""),
        residuals={k: float(v) for k, v in data.get("residuals", {}).items()},
    )


def dump_json(record: Dict[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=1))
    logger.info(f"Wrote {record.get('kind', 'record')} to {path}")
    return path


def load_json(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot read {path}: {e}") from e
