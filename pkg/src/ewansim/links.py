"""Path-loss matrices describing who can hear whom."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .radio import RadioConfig, reception_probability


@dataclass(frozen=True)
class LinkMatrix:
    """Symmetric n x n path loss in dB, host at index 0, diagonal unused."""

    n: int
    loss: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.loss, dtype=float)
        if arr.shape != (self.n, self.n):
            raise ValueError(
                f"loss matrix shape {arr.shape} does not match n={self.n}"
            )
        if np.any(arr < 0.0):
            raise ValueError("path loss entries must be >= 0 dB")
        if not np.allclose(arr, arr.T, atol=1e-9):
            raise ValueError("path loss matrix must be symmetric")
        object.__setattr__(self, "loss", arr)

    @classmethod
    def from_lists(cls, rows: list[list[float]]) -> "LinkMatrix":
        return cls(n=len(rows), loss=np.asarray(rows, dtype=float))

    def loss_db(self, i: int, j: int) -> float:
        return float(self.loss[i, j])

    def link_probability(self, i: int, j: int, config: RadioConfig,
                         ramp_width_db: float = 2.0) -> float:
        """Reception probability of a lone packet from i heard at j."""
        rx = config.tx_power_dbm - self.loss_db(i, j)
        return reception_probability(rx, config.sensitivity_dbm, ramp_width_db)

    def all_links_deterministic(self, nodes, config: RadioConfig,
                                ramp_width_db: float = 2.0) -> bool:
        """True when every pairwise link among the given nodes has
        reception probability exactly 0 or 1, which makes any
        single-packet flood over them independent of the random stream."""
        ids = sorted(nodes)
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                p = self.link_probability(ids[a], ids[b], config, ramp_width_db)
                if 0.0 < p < 1.0:
                    return False
        return True
