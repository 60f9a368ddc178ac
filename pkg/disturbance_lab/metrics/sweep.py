import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from disturbance_lab.exceptions import DimensionError
from dynamics.series import FLOAT_FORMAT

logger = logging.getLogger(__name__)

DEFAULT_GAIN_TOLERANCE = 0.05


@dataclass
class SweepResult:
    """d(α) per gain; diverged gains carry no distance."""

    scheme: str
    alphas: List[float] = field(default_factory=list)
    distances: List[Optional[float]] = field(default_factory=list)
    stable: List[bool] = field(default_factory=list)

    def __post_init__(self):
        if not (len(self.alphas) == len(self.distances) == len(self.stable)):
            raise DimensionError("Sweep columns must have equal lengths")

    def add(self, alpha: float, distance: Optional[float]) -> None:
        self.alphas.append(float(alpha))
        self.stable.append(distance is not None)
        self.distances.append(None if distance is None else float(distance))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'alpha': self.alphas,
            'distance': [np.nan if d is None else d for d in self.distances],
            'stable': self.stable,
        })

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        return path


def suggest_gain(sweep: SweepResult, tolerance: float = DEFAULT_GAIN_TOLERANCE) -> Optional[float]:
    """
    Smallest stable gain whose distance differs from the next stable gain's
    by at most ``tolerance`` relative to its own; None if no gain settles.
    """
    stable = sorted((a, d) for a, d, ok in zip(sweep.alphas, sweep.distances, sweep.stable) if ok)
    for (alpha, distance), (_, following) in zip(stable, stable[1:]):
        if abs(distance - following) <= tolerance * abs(distance):
            return alpha
    logger.info(f"No gain in {sweep.scheme} sweep settles within {tolerance:g}")
    return None
