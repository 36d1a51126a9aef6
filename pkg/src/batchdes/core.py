"""Domain types shared by the codec, composer and engine.

A model is a fixed-order list of event handlers plus a lookahead per event
type.  Event type ids start at 1; digit 0 of the batch-id number system is
the reserved "no event" symbol and never names a handler.

Handlers have the signature ``handler(state, event, out)``:

* ``state`` is a numpy array owned by the engine and mutated in place;
* ``event`` exposes ``.time`` and ``.payload``;
* ``out`` is the emission buffer; new events are requested with
  :func:`emit` and are inserted by the engine only after the enclosing batch
  has finished.

Handler bodies are inlined into composed batches by the composer, so a
handler must be a plain ``def`` whose source is available to ``inspect``.
"""
from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

# emission buffer layout: out[0] = count, then rows of (type, time, payload, slot)
EMIT_HEADER = 1
EMIT_WIDTH = 4


class ModelError(ValueError):
    """Raised when a model definition is malformed."""


class EmptyAlphabet(ModelError):
    def __init__(self):
        super().__init__("model registers no event handlers")


class MissingLookahead(ModelError):
    def __init__(self, type_id: int):
        super().__init__(f"no lookahead defined for event type {type_id}")
        self.type_id = type_id


class NegativeLookahead(ModelError):
    def __init__(self, type_id: int, value: float):
        super().__init__(f"lookahead of event type {type_id} is negative ({value})")
        self.type_id = type_id
        self.value = value


@dataclass(frozen=True, order=True)
class Event:
    """A pending or executed event.  Ordered by ``(time, seq)``."""

    time: float
    seq: int
    type_id: int = field(compare=False)
    payload: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class EventRequest:
    """A new event produced by a handler.  ``slot`` is the position of the
    creating event inside its batch."""

    type_id: int
    time: float
    payload: float = 0.0
    slot: int = 0


@dataclass
class HandlerOutcome:
    new_events: list[EventRequest] = field(default_factory=list)


class LookaheadTable(Mapping):
    """Per-type minimum delta between an event's time and any child it creates."""

    def __init__(self, values: Mapping[int, float] | Sequence[float]):
        if isinstance(values, Mapping):
            self._values = {int(k): float(v) for k, v in values.items()}
        else:
            self._values = {i + 1: float(v) for i, v in enumerate(values)}

    def __getitem__(self, type_id: int) -> float:
        return self._values[type_id]

    def __iter__(self):
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def __repr__(self):
        return f"LookaheadTable({self._values!r})"

    def as_array(self, alphabet_size: int) -> np.ndarray:
        """Dense float64 array indexed by type id; index 0 is unused."""
        arr = np.zeros(alphabet_size + 1, dtype=np.float64)
        for t in range(1, alphabet_size + 1):
            arr[t] = self._values[t]
        return arr


@dataclass
class ModelDefinition:
    """Handlers in type-id order (index i holds type i+1), lookaheads, and the
    initial state array.  ``max_emits`` bounds how many events one handler
    invocation may request."""

    handlers: Sequence[Callable]
    lookaheads: LookaheadTable | Mapping[int, float] | Sequence[float]
    initial_state: np.ndarray
    name: str = "model"
    max_emits: int = 4

    def __post_init__(self):
        self.handlers = tuple(self.handlers)
        if not isinstance(self.lookaheads, LookaheadTable):
            self.lookaheads = LookaheadTable(self.lookaheads)
        self.initial_state = np.asarray(self.initial_state)

    @property
    def alphabet_size(self) -> int:
        return len(self.handlers)

    def handler_for(self, type_id: int) -> Callable:
        if not 1 <= type_id <= len(self.handlers):
            raise KeyError(type_id)
        return self.handlers[type_id - 1]

    def type_ids(self) -> range:
        return range(1, len(self.handlers) + 1)


def validate_model(model: ModelDefinition) -> ModelDefinition:
    if len(model.handlers) == 0:
        raise EmptyAlphabet()
    for t in model.type_ids():
        if t not in model.lookaheads:
            raise MissingLookahead(t)
        la = model.lookaheads[t]
        if not la >= 0:
            raise NegativeLookahead(t, la)
    if model.max_emits < 0:
        raise ModelError("max_emits must be non-negative")
    return model


def emit(out, type_id, time, payload=0.0, slot=0):
    """Request a new event of ``type_id`` at ``time``.

    Writes past the buffer capacity are dropped but still counted, so the
    engine can report the overflow.  The composer rewrites calls to this
    function so that ``slot`` carries the creator's batch position.
    """
    i = int(out[0])
    j = EMIT_HEADER + EMIT_WIDTH * i
    if j + EMIT_WIDTH <= out.shape[0]:
        out[j] = type_id
        out[j + 1] = time
        out[j + 2] = payload
        out[j + 3] = slot
    out[0] = i + 1


def new_emit_buffer(capacity: int) -> np.ndarray:
    return np.zeros(EMIT_HEADER + EMIT_WIDTH * max(capacity, 1), dtype=np.float64)


def drain_emit_buffer(out: np.ndarray, count: int | None = None) -> list[EventRequest]:
    """Read and clear the requests held in ``out``."""
    if count is None:
        count = int(out[0])
    capacity = (out.shape[0] - EMIT_HEADER) // EMIT_WIDTH
    if count > capacity:
        raise EmitOverflow(count, capacity)
    reqs = []
    for i in range(count):
        j = EMIT_HEADER + EMIT_WIDTH * i
        reqs.append(EventRequest(int(out[j]), float(out[j + 1]), float(out[j + 2]), int(out[j + 3])))
    out[0] = 0.0
    return reqs


class EmitOverflow(RuntimeError):
    def __init__(self, count: int, capacity: int):
        super().__init__(
            f"batch requested {count} new events but the emission buffer holds {capacity}; "
            "raise ModelDefinition.max_emits"
        )
        self.count = count
        self.capacity = capacity


def copy_state(state: Any) -> np.ndarray:
    return np.array(state, copy=True)
