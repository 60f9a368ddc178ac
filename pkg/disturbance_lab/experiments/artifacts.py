"""
Run directories: CSV/JSON artifacts, the resolved ``config.env`` and a
``manifest.json`` with sha256 checksums of every artifact.
"""
import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import pandas as pd
import scipy
from django.db import DatabaseError
from django.utils import timezone

from dynamics.series import FLOAT_FORMAT, TimeSeries
from .config import ExperimentConfig

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'
CONFIG_NAME = 'config.env'


def sha256_of(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for block in iter(lambda: handle.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()


def jsonable(value: Any) -> Any:
    """Plain JSON types; NaN and inf become None."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


class RunArtifacts:
    """Files written by one run, tracked for the manifest."""

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.files: Dict[str, Path] = {}

    def path(self, name: str) -> Path:
        return self.directory / name

    def _register(self, name: str) -> Path:
        path = self.path(name)
        self.files[name] = path
        logger.debug(f"Wrote {path}")
        return path

    def write_series(self, name: str, series: TimeSeries) -> Path:
        series.to_csv(self.path(name))
        return self._register(name)

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        frame.to_csv(self.path(name), index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        return self._register(name)

    def write_json(self, name: str, data: Dict[str, Any]) -> Path:
        with open(self.path(name), 'w', encoding='utf-8', newline='\n') as handle:
            json.dump(jsonable(data), handle, indent=2, sort_keys=True)
            handle.write('\n')
        return self._register(name)

    def register(self, name: str) -> Path:
        """Track a file written by someone else (e.g. a reservoir archive)."""
        return self._register(name)

    def checksums(self) -> Dict[str, str]:
        return {name: sha256_of(path) for name, path in sorted(self.files.items())}

    def finalize(self, cfg: ExperimentConfig, status: str, summary: Dict[str, Any]) -> Path:
        """Write config.env and manifest.json; returns the manifest path."""
        self.path(CONFIG_NAME).write_text(cfg.to_env(), encoding='utf-8')
        manifest = {
            'experiment': cfg.experiment,
            'status': status,
            'seeds': cfg.seeds(),
            'config': cfg.to_mapping(),
            'artifacts': self.checksums(),
            'versions': {'numpy': np.__version__, 'scipy': scipy.__version__, 'pandas': pd.__version__},
            'created_at': timezone.now().isoformat(),
            'summary': jsonable(summary),
        }
        path = self.path(MANIFEST_NAME)
        with open(path, 'w', encoding='utf-8', newline='\n') as handle:
            json.dump(manifest, handle, indent=2, sort_keys=True)
            handle.write('\n')
        logger.info(f"Wrote manifest with {len(manifest['artifacts'])} artifacts to {path}")
        return path


def read_manifest(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    with open(path, encoding='utf-8') as handle:
        return json.load(handle)


def record_run(cfg: ExperimentConfig, status: str, directory: Path, summary: Dict[str, Any], manifest: Path) -> None:
    """Log the run in the database; an unavailable database only warns."""
    from .models import ExperimentRun

    try:
        ExperimentRun.objects.create(
            experiment=cfg.experiment,
            status=status,
            seed=str(cfg.seed),
            output_dir=str(directory),
            summary=jsonable(summary),
            manifest_sha256=sha256_of(manifest),
        )
    except DatabaseError as exc:
        logger.warning(f"Could not record run in the database: {exc}")
