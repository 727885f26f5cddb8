import hashlib
import json
import logging
from abc import ABC, abstractmethod
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import pandas as pd

from src.core.error_handlers import ConfigurationError
from src.domain.entities.report import CSV_COLUMNS

logger = logging.getLogger(__name__)


def config_hash(config: Mapping[str, Any]) -> str:
    """SHA-1 of the canonical JSON form of a configuration."""
    return hashlib.sha1(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()


class ResultRepository(ABC):
    """Abstract base class for sweep result persistence."""

    @abstractmethod
    def save(self, rows: List[Dict[str, Any]], config: Mapping[str, Any], name: Optional[str] = None) -> str:
        """Persist result rows with the configuration that produced them; returns the run name."""
        pass

    @abstractmethod
    def load(self, run: str) -> Tuple[pd.DataFrame, Dict[str, Any]]:
        """Rows and configuration of a stored run."""
        pass

    @abstractmethod
    def list_runs(self) -> List[str]:
        pass


class CsvResultRepository(ResultRepository):
    """One CSV per run plus a JSON sidecar carrying the full configuration and its hash."""

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)

    def csv_path(self, run: str) -> Path:
        return self.directory / f"{run}.csv"

    def sidecar_path(self, run: str) -> Path:
        return self.directory / f"{run}.json"

    def save(self, rows: List[Dict[str, Any]], config: Mapping[str, Any], name: Optional[str] = None) -> str:
        digest = config_hash(config)
        run = name or f"sweep_{digest[:10]}"
        self.directory.mkdir(parents=True, exist_ok=True)

        frame = pd.DataFrame(rows, columns=list(CSV_COLUMNS))
        frame.to_csv(self.csv_path(run), index=False)
        sidecar = {
            "config": dict(config),
            "config_sha1": digest,
            "columns": list(CSV_COLUMNS),
            "rows": len(frame),
            "written_at": datetime.now(timezone.utc).isoformat(),
        }
        self.sidecar_path(run).write_text(json.dumps(sidecar, indent=2, sort_keys=True, default=str))
        logger.info(f"Saved {len(frame)} rows to {self.csv_path(run)} (config {digest[:10]})")
        return run

    def load(self, run: str) -> Tuple[pd.DataFrame, Dict[str, Any]]:
        path, sidecar = self.csv_path(run), self.sidecar_path(run)
        if not path.exists() or not sidecar.exists():
            raise ConfigurationError(f"No stored run '{run}' in {self.directory}")
        metadata = json.loads(sidecar.read_text())
        if config_hash(metadata["config"]) != metadata["config_sha1"]:
            raise ConfigurationError(f"Sidecar of run '{run}' does not match its configuration hash")
        frame = pd.read_csv(path, keep_default_na=True)
        return frame, metadata

    def list_runs(self) -> List[str]:
        if not self.directory.exists():
            return []
        return sorted(p.stem for p in self.directory.glob("*.csv") if self.sidecar_path(p.stem).exists())
