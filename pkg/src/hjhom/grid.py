"""Periodic grid functions on the unit torus."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GridFunction:
    """Real 1-periodic function sampled at the n equispaced nodes j/n of [0, 1).

    Shifts are exact node permutations, so torus translations never introduce
    interpolation error.  Spectral operations additionally require n to be a
    power of two.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("grid function values must be a 1-D array")
        if v.size < 8:
            raise ValueError("grid function needs at least 8 nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, f, n: int) -> "GridFunction":
        return cls(np.asarray(f(np.arange(n) / n), dtype=float))

    @classmethod
    def constant(cls, c: float, n: int) -> "GridFunction":
        return cls(np.full(n, float(c)))

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return 1.0 / self.values.size

    def nodes(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    def mean(self) -> float:
        return float(np.mean(self.values))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def osc(self) -> float:
        return float(np.max(self.values) - np.min(self.values))

    def shift(self, k: int) -> "GridFunction":
        """Exact translation by k nodes: result[j] = self[(j + k) mod n]."""
        return GridFunction(np.roll(self.values, -k))

    def minus_mean(self) -> "GridFunction":
        return GridFunction(self.values - np.mean(self.values))

    def value_near(self, points: np.ndarray) -> np.ndarray:
        """Values at arbitrary torus points by nearest-node lookup."""
        idx = np.rint(np.asarray(points) * self.n).astype(np.int64) % self.n
        return self.values[idx]


def require_power_of_two(n: int, what: str = "grid size") -> None:
    if n < 8 or (n & (n - 1)) != 0:
        raise ValueError(f"{what} must be a power of two >= 8, got {n}")


def forward_diff(values: np.ndarray, h: float) -> np.ndarray:
    return (np.roll(values, -1) - values) / h


def backward_diff(values: np.ndarray, h: float) -> np.ndarray:
    return (values - np.roll(values, 1)) / h


def central_diff(values: np.ndarray, h: float) -> np.ndarray:
    return (np.roll(values, -1) - np.roll(values, 1)) / (2.0 * h)
