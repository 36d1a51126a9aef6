"""Synthetic Increment/Set model.

Increment runs ``sum += sum + 1`` a fixed number of times; Set overwrites
``sum`` with 10.  An Increment followed by a Set inside one composed batch is
dead code, which is what the batching is meant to expose to the optimizer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .barrier import opaque
from .core import Event, ModelDefinition

INCREMENT = 1
SET = 2
SET_VALUE = np.uint64(10)
ONE = np.uint64(1)
DEFAULT_ITERATIONS = 1_000_000


SUM = 0
ITERATIONS = 1


def increment_handler(state, event, out):
    # the barrier stops the optimizer from folding the unrolled chain (after
    # 64 wrapped doublings the result is all ones), which would make a
    # standalone Increment nearly free; a following Set still kills the loop
    s = state[SUM]
    for _ in range(int(state[ITERATIONS])):
        s = opaque(s + s + ONE)
    state[SUM] = s


def set_handler(state, event, out):
    state[SUM] = SET_VALUE


@dataclass
class PocState:
    """Python-side view of the model state; the engine works on ``array``."""

    sum: int = 0
    iterations: int = DEFAULT_ITERATIONS

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    @property
    def array(self) -> np.ndarray:
        return np.array([self.sum, self.iterations], dtype=np.uint64)

    @classmethod
    def from_array(cls, arr) -> "PocState":
        return cls(int(arr[SUM]), int(arr[ITERATIONS]))


def make_poc_model(iterations: int = DEFAULT_ITERATIONS, lookahead: float = 1e6, initial_sum: int = 0):
    """Both handlers share one lookahead; the iteration count lives in the state."""
    return ModelDefinition(
        handlers=[increment_handler, set_handler],
        lookaheads={INCREMENT: lookahead, SET: lookahead},
        initial_state=PocState(initial_sum, iterations).array,
        name=f"increment-set(iterations={iterations})",
        max_emits=0,
    )


def build_workload(event_count: int, p_set: float, seed: int) -> list[Event]:
    """One event per integer timestep, Set with probability ``p_set``."""
    if not 0.0 <= p_set <= 1.0:
        raise ValueError("p_set must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    is_set = rng.random(event_count) < p_set
    types = np.where(is_set, SET, INCREMENT)
    return [Event(float(i), i, int(types[i])) for i in range(event_count)]


def workload_lookahead(event_count: int) -> float:
    """Lookahead large enough that every window spans the whole run."""
    return float(max(event_count, 1))


def final_sum(state: np.ndarray) -> int:
    return int(state[SUM])


def reference_sum(types, iterations: int, initial_sum: int = 0) -> int:
    """Plain-integer replay of a type sequence with 64-bit wraparound."""
    mask = (1 << 64) - 1
    s = initial_sum
    for t in types:
        if t == SET:
            s = int(SET_VALUE)
        else:
            # x -> 2x + 1 applied k times is 2^k (x + 1) - 1
            s = ((s + 1) * pow(2, iterations, 1 << 64) - 1) & mask
    return s
