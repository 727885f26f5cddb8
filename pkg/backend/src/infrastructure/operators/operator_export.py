import logging
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from src.core.error_handlers import ConfigurationError
from src.domain.entities.protocol import TruncatedOperators

logger = logging.getLogger(__name__)

MAGIC = "# dmcv-operator v1"


def write_operator_file(path: Union[str, Path], matrix: np.ndarray, label: str) -> Path:
    """
    Write a dense complex matrix to the interchange format.

    Args:
        path: Destination file
        matrix: Square matrix (real or complex)
        label: Score or operator label written into the header

    Returns:
        The path written
    """
    path = Path(path)
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ConfigurationError(f"Operator '{label}' is not square: shape {matrix.shape}")

    header = "\n".join([
        MAGIC,
        f"label: {label}",
        f"dimension: {matrix.shape[0]}",
        "planes: real,imag",
        "byteorder: little",
        "dtype: float64",
        "",
        "",
    ]).encode("ascii")
    payload = np.concatenate([matrix.real.ravel(order="C"), matrix.imag.ravel(order="C")]).astype("<f8")
    path.write_bytes(header + payload.tobytes())
    return path


def read_operator_file(path: Union[str, Path]) -> Tuple[str, np.ndarray]:
    raw = Path(path).read_bytes()
    head, sep, body = raw.partition(b"\n\n")
    if not sep:
        raise ConfigurationError(f"{path}: missing header terminator")
    lines = head.decode("ascii").splitlines()
    if not lines or lines[0] != MAGIC:
        raise ConfigurationError(f"{path}: not an operator file")
    fields = dict(line.split(": ", 1) for line in lines[1:])
    dimension = int(fields["dimension"])
    values = np.frombuffer(body, dtype="<f8")
    if values.size != 2 * dimension * dimension:
        raise ConfigurationError(f"{path}: expected {2 * dimension * dimension} values, found {values.size}")
    real, imag = values[: dimension * dimension], values[dimension * dimension:]
    matrix = (real + 1j * imag).reshape(dimension, dimension)
    return fields["label"], matrix


def dump_operators(operators: TruncatedOperators, directory: Union[str, Path]) -> List[Path]:
    """Export every operator of the family, one file per label."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    named: Dict[str, np.ndarray] = {f"test_{c.value}": m for c, m in operators.test_povms.items()}
    named.update({f"key_{z}": m for z, m in operators.key_povms.items()})
    named["key_none"] = operators.no_click_povm
    named["post_selection"] = operators.post_selection
    named["alice_marginal"] = operators.alice_marginal

    written = [write_operator_file(directory / f"{label}.op", matrix, label) for label, matrix in named.items()]
    logger.info(f"Wrote {len(written)} operator files to {directory} (kappa={operators.kappa:.6g})")
    return written
