"""Monte Carlo estimate container and deterministic accumulation helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Estimate", "estimate_from_samples", "ChunkAccumulator"]


@dataclass(frozen=True)
class Estimate:
    """Sample mean with its standard error and a 95% normal interval."""

    mean: float
    std_error: float
    samples: int
    ci95: tuple[float, float] = field(default=None)

    def __post_init__(self):
        if self.ci95 is None:
            object.__setattr__(
                self, "ci95",
                (self.mean - 1.96 * self.std_error, self.mean + 1.96 * self.std_error),
            )


def estimate_from_samples(values: np.ndarray) -> Estimate:
    values = np.asarray(values, dtype=float)
    n = values.size
    mean = float(np.mean(values))
    if n > 1:
        se = float(np.std(values, ddof=1)) / math.sqrt(n)
    else:
        se = 0.0
    return Estimate(mean=mean, std_error=se, samples=n)


class ChunkAccumulator:
    """Order-insensitive accumulation of chunked sample batches.

    Per-chunk partial sums come from numpy's pairwise summation and are then
    combined with math.fsum, which is exact, so the final mean and standard
    error are bit-identical no matter how the fixed-size chunks were scheduled.
    """

    def __init__(self):
        self._sums: list[float] = []
        self._sq_sums: list[float] = []
        self._count = 0

    def add(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        self._sums.append(float(np.sum(values)))
        self._sq_sums.append(float(np.sum(values * values)))
        self._count += values.size

    def result(self) -> Estimate:
        n = self._count
        if n == 0:
            return Estimate(mean=0.0, std_error=0.0, samples=0)
        total = math.fsum(self._sums)
        total_sq = math.fsum(self._sq_sums)
        mean = total / n
        if n > 1:
            var = max(0.0, (total_sq - n * mean * mean) / (n - 1))
            se = math.sqrt(var / n)
        else:
            se = 0.0
        return Estimate(mean=mean, std_error=se, samples=n)
