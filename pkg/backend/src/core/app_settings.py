import os
from dotenv import load_dotenv
from typing import List

from src.core.error_handlers import ConfigurationError

# Load environment variables
load_dotenv()

class Settings:
    """Application settings and configuration."""

    # API Settings
    API_TITLE = "DM-CV-QKD Key Rate Service"
    API_VERSION = "1.0.0"
    API_DESCRIPTION = "Certified finite-size key rates for QPSK continuous-variable QKD"

    # CORS Settings
    CORS_ORIGINS: List[str] = [
        origin.strip()
        for origin in os.getenv("CORS_ORIGINS", "http://localhost:3000,http://127.0.0.1:3000").split(",")
        if origin.strip()
    ]

    # Solver Settings
    SOLVER: str = os.getenv("KEYRATE_SOLVER", "SCS")
    SOLVER_EPS: float = float(os.getenv("KEYRATE_SOLVER_EPS", "1e-9"))
    SOLVER_MAX_ITERS: int = int(os.getenv("KEYRATE_SOLVER_MAX_ITERS", "200000"))
    VERIFY_TOLERANCE: float = float(os.getenv("KEYRATE_VERIFY_TOLERANCE", "1e-7"))
    SOLVE_PRIMAL: bool = os.getenv("KEYRATE_SOLVE_PRIMAL", "true").lower() in ("1", "true", "yes")

    # Pipeline Settings
    WORKERS: int = int(os.getenv("KEYRATE_WORKERS", "1"))
    OUTPUT_DIR: str = os.getenv("KEYRATE_OUTPUT_DIR", "results")
    LOG_LEVEL: str = os.getenv("KEYRATE_LOG_LEVEL", "INFO")
    SEED: int = int(os.getenv("KEYRATE_SEED", "20240521"))

    @classmethod
    def validate(cls) -> None:
        """Validate settings that would otherwise fail deep inside a solve."""
        problems = []
        if cls.SOLVER_EPS <= 0 or cls.SOLVER_EPS >= 1:
            problems.append(f"KEYRATE_SOLVER_EPS={cls.SOLVER_EPS} must lie in (0, 1)")
        if cls.SOLVER_MAX_ITERS < 1:
            problems.append(f"KEYRATE_SOLVER_MAX_ITERS={cls.SOLVER_MAX_ITERS} must be positive")
        if cls.VERIFY_TOLERANCE <= 0:
            problems.append(f"KEYRATE_VERIFY_TOLERANCE={cls.VERIFY_TOLERANCE} must be positive")
        if cls.WORKERS < 1:
            problems.append(f"KEYRATE_WORKERS={cls.WORKERS} must be at least 1")
        if cls.LOG_LEVEL.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            problems.append(f"KEYRATE_LOG_LEVEL={cls.LOG_LEVEL} is not a logging level")

        if problems:
            raise ConfigurationError(f"Invalid environment settings: {'; '.join(problems)}")

# Create settings instance
settings = Settings()
