"""Mean/variance accumulation for Monte Carlo estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class McAccumulator:
    """Welford accumulator over scalars or equally shaped arrays.

    ``merge`` follows Chan et al.'s pairwise update, so partial results from
    independent workers combine in any grouping.
    """

    n: int = 0
    mean: np.ndarray | float = 0.0
    m2: np.ndarray | float = 0.0

    def add(self, x) -> "McAccumulator":
        x = np.asarray(x, dtype=float)
        self.n += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.n
        self.m2 = self.m2 + delta * (x - self.mean)
        return self

    def merge(self, other: "McAccumulator") -> "McAccumulator":
        if other.n == 0:
            return McAccumulator(self.n, self.mean, self.m2)
        if self.n == 0:
            return McAccumulator(other.n, other.mean, other.m2)
        n = self.n + other.n
        delta = np.asarray(other.mean) - self.mean
        mean = (self.n * np.asarray(self.mean) + other.n * np.asarray(other.mean)) / n
        m2 = self.m2 + other.m2 + delta**2 * (self.n * other.n / n)
        return McAccumulator(n, mean, m2)

    @classmethod
    def from_samples(cls, samples) -> "McAccumulator":
        """Exactly rounded, order-independent reduction along axis 0."""
        x = np.asarray(samples, dtype=float)
        n = x.shape[0]
        if n == 0:
            return cls()
        flat = x.reshape(n, -1)
        mean = np.array([math.fsum(col) for col in flat.T]) / n
        dev = flat - mean
        m2 = np.array([math.fsum(col) for col in (dev * dev).T])
        shape = x.shape[1:]
        if shape == ():
            return cls(n, float(mean[0]), float(m2[0]))
        return cls(n, mean.reshape(shape), m2.reshape(shape))

    @property
    def variance(self):
        if self.n < 2:
            return np.zeros_like(np.asarray(self.mean, dtype=float))
        return np.asarray(self.m2) / (self.n - 1)

    @property
    def stderr(self):
        """sqrt(M2 / (n (n-1)))."""
        if self.n < 2:
            return np.zeros_like(np.asarray(self.mean, dtype=float))
        return np.sqrt(np.asarray(self.m2) / (self.n * (self.n - 1)))
