from typing import Optional

from fastapi import HTTPException, status


class KeyRateError(Exception):
    """Base class for every failure raised by the key-rate toolkit."""
    pass


class DomainError(KeyRateError, ValueError):
    """Raised when an argument lies outside the mathematical domain of a function."""
    pass


class ConfigurationError(KeyRateError):
    """Raised when there's a configuration error."""
    pass


class DegenerateRegionError(KeyRateError):
    """Raised when a phase-space region has zero radial or angular extent."""
    pass


class InfeasibleProblemError(KeyRateError):
    """Raised when the entropy SDP is infeasible."""

    def __init__(self, group: str, detail: str):
        self.group = group
        super().__init__(f"Infeasible constraint group '{group}': {detail}")


class SolverError(KeyRateError):
    """Raised when the conic solver fails without a usable solution."""

    def __init__(self, solver: str, solver_status: Optional[str], detail: str = ""):
        self.solver = solver
        self.solver_status = solver_status
        message = f"Solver {solver} returned status '{solver_status}'"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class CertificateRejectedError(KeyRateError):
    """Raised when a dual certificate fails independent verification."""

    def __init__(self, check: str, margin: float):
        self.check = check
        self.margin = margin
        super().__init__(f"Certificate rejected by check '{check}' (margin {margin:.3e})")


class EmptyAcceptanceSetError(KeyRateError):
    """Raised when the acceptance polytope has no feasible point."""
    pass


class KeyRateComputationError(HTTPException):
    """Raised when a key-rate request fails inside the numerical pipeline."""
    def __init__(self, detail: str):
        super().__init__(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Failed to compute key rate: {detail}"
        )


class InvalidParametersError(HTTPException):
    """Raised when request parameters violate the protocol's domain."""
    def __init__(self, detail: str):
        super().__init__(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail=f"Invalid parameters: {detail}"
        )


def error_record(exc: BaseException) -> dict:
    """Machine-readable description of an exception for CLI/HTTP consumers."""
    record = {"error": type(exc).__name__, "detail": str(exc)}
    for attribute in ("group", "solver", "solver_status", "check", "margin"):
        if hasattr(exc, attribute):
            record[attribute] = getattr(exc, attribute)
    return record
