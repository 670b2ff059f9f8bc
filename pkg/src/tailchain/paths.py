"""Replicate-by-time path containers shared by simulators and diagnostics."""
from dataclasses import dataclass, field

import numpy as np


@dataclass
class PathEnsemble:
    """An (n_rep, T+1) matrix of path values plus reproduction metadata.

    `data` may contain NaN past a replicate's termination time (the
    regime-switching family) and is otherwise finite.  `norming` records
    which renormalization has been applied: "none", "location-scale",
    "scale-only" or "difference".
    """

    data: np.ndarray
    u: float = None
    seed: int = None
    model: str = ""
    norming: str = "none"
    extras: dict = field(default_factory=dict)

    @property
    def n_rep(self):
        return self.data.shape[0]

    @property
    def horizon(self):
        return self.data.shape[1] - 1

    def column(self, t):
        col = self.data[:, t]
        return col[np.isfinite(col)]

    def with_data(self, data, norming=None):
        return PathEnsemble(data=data, u=self.u, seed=self.seed, model=self.model,
                            norming=self.norming if norming is None else norming,
                            extras=dict(self.extras))
