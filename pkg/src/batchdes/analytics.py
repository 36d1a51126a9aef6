"""Expected cost and speedup of batching for the costly/cheap two-class model.

Within a batch of ``n`` i.i.d. events, each costly (Increment-like) with
probability ``p_i``, a costly event's work survives only if no cheap
(Set-like) event follows it in the same batch.  Cheap events cost nothing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DegenerateProbability(ValueError):
    """The closed form is undefined at p_i in {0, 1}; pass ``allow_limit=True``
    to get the analytic limit instead."""


@dataclass(frozen=True)
class SpeedupModel:
    n: int
    p_i: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("batch length n must be >= 1")
        if not 0.0 <= self.p_i <= 1.0:
            raise ValueError("p_i must lie in [0, 1]")

    @classmethod
    def from_p_set(cls, n: int, p_set: float) -> "SpeedupModel":
        return cls(n, 1.0 - p_set)

    @property
    def p_s(self) -> float:
        return 1.0 - self.p_i

    @property
    def degenerate(self) -> bool:
        return self.p_i in (0.0, 1.0)


def expected_unbatched_cost(m: SpeedupModel) -> float:
    return m.n * m.p_i


def _check(m: SpeedupModel, allow_limit: bool):
    if m.degenerate and not allow_limit:
        raise DegenerateProbability(f"closed form undefined at p_i={m.p_i}")


def expected_batched_cost(m: SpeedupModel, allow_limit: bool = False) -> float:
    _check(m, allow_limit)
    if m.p_i == 1.0:
        return float(m.n)
    if m.p_i == 0.0:
        return 0.0
    return (1.0 - m.p_i**m.n) / (1.0 / m.p_i - 1.0)


def expected_batched_cost_sum(m: SpeedupModel) -> float:
    """The same expectation written as the position-by-position sum."""
    p, q, n = m.p_i, m.p_s, m.n
    return sum(j * p**j * q for j in range(1, n)) + n * p**n


def max_speedup(m: SpeedupModel, allow_limit: bool = False) -> float:
    _check(m, allow_limit)
    if m.p_i == 1.0:
        return 1.0
    return m.n * (1.0 - m.p_i) / (1.0 - m.p_i**m.n)


def monte_carlo_batched_cost(
    m: SpeedupModel, samples: int, seed: int | None = None, chunk: int = 1 << 18
) -> tuple[float, float]:
    """Sample mean and standard error of the surviving costly work per batch."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        costly = rng.random((k, m.n)) < m.p_i
        # a costly event survives iff every later event in its batch is costly,
        # i.e. it sits in the all-costly suffix
        suffix = np.cumprod(costly[:, ::-1], axis=1)
        cost = suffix.sum(axis=1, dtype=np.int64).astype(np.float64)
        total += cost.sum()
        total_sq += (cost * cost).sum()
        done += k
    mean = total / samples
    if samples == 1:
        return mean, 0.0
    var = max(total_sq / samples - mean * mean, 0.0) * samples / (samples - 1)
    return mean, math.sqrt(var / samples)
