"""Trained-reservoir archives (``numpy.savez``) that reload bit-identically."""
import json
import logging
from pathlib import Path
from typing import Union

import numpy as np

from disturbance_lab.exceptions import ConfigurationError
from linalg_core.matrices import from_triplets, to_triplets
from .esn import Reservoir, ReservoirConfig

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def save_reservoir(reservoir: Reservoir, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows, cols, values = to_triplets(reservoir.A)
    arrays = {
        'format_version': np.array(FORMAT_VERSION),
        'config': np.array(json.dumps(reservoir.config.to_dict(), sort_keys=True)),
        'A_rows': rows,
        'A_cols': cols,
        'A_values': values,
        'W_in': reservoir.W_in,
        'r': reservoir.r,
        'trained': np.array(reservoir.is_trained),
    }
    if reservoir.is_trained:
        arrays['W_out'] = reservoir.W_out
    # savez appends .npz to bare names; write through a handle to keep the given path
    with open(path, 'wb') as handle:
        np.savez(handle, **arrays)
    logger.info(f"Saved reservoir (M={reservoir.config.M}) to {path}")
    return path


def load_reservoir(path: Union[str, Path]) -> Reservoir:
    path = Path(path)
    with np.load(path, allow_pickle=False) as archive:
        version = int(archive['format_version'])
        if version != FORMAT_VERSION:
            raise ConfigurationError(f"Unsupported reservoir archive version {version} in {path}")
        settings = json.loads(str(archive['config']))
        settings['output_channels'] = tuple(settings['output_channels'])
        config = ReservoirConfig(**settings)
        A = from_triplets(archive['A_rows'], archive['A_cols'], archive['A_values'], config.M)
        W_out = archive['W_out'] if bool(archive['trained']) else None
        reservoir = Reservoir(config, A, archive['W_in'], W_out=W_out, r=archive['r'])
    logger.info(f"Loaded reservoir (M={config.M}) from {path}")
    return reservoir
