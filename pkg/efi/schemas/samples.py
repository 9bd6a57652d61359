from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd


@dataclass
class FiducialSamples:
    """
    Collected draws of the inverse network's mean estimate.

    ``draws`` holds one row per collection in natural parameterization;
    ``derived`` holds functionals computed row-by-row from those draws.
    """

    draws: np.ndarray
    param_names: List[str]
    derived: Dict[str, np.ndarray] = field(default_factory=dict)
    meta: Dict[str, Any] = field(default_factory=dict)
    trace: Optional[pd.DataFrame] = None
    latents: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.draws = np.asarray(self.draws, dtype=float).reshape(-1, len(self.param_names))

    @property
    def n_draws(self) -> int:
        return int(self.draws.shape[0])

    @property
    def names(self) -> List[str]:
        return list(self.param_names) + list(self.derived)

    def column(self, name: str) -> np.ndarray:
        if name in self.param_names:
            return self.draws[:, self.param_names.index(name)]
        if name in self.derived:
            return np.asarray(self.derived[name], dtype=float)
        raise KeyError(f"no parameter or derived quantity named '{name}'")

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.draws, columns=self.param_names)
        for name, values in self.derived.items():
            frame[name] = values
        return frame
