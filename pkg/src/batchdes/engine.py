"""Runtime: future event set, lookahead-window batch extraction, dispatch.

The engine pops the earliest event, then keeps admitting the next pending
event while it lies strictly before ``t_max``, the running minimum of
``time + lookahead`` over the events already admitted, up to the configured
batch length.  The admitted type sequence is encoded into a batch id and the
composed procedure for that id runs.  New events requested inside a batch are
inserted after the batch completes, each checked against its creator's
lookahead.

Tables built with the numba backend run through a compiled event loop; the
python backend (or ``EngineConfig(compiled=False)``) uses the interpreted
loop.  Both implement the same semantics.
"""
from __future__ import annotations

import heapq
import math
import time
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np

from .composer import BatchTable
from .core import (
    EMIT_HEADER,
    EMIT_WIDTH,
    EmitOverflow,
    Event,
    EventRequest,
    ModelDefinition,
    ModelError,
    new_emit_buffer,
    validate_model,
)


class EngineError(RuntimeError):
    pass


class LookaheadViolation(EngineError):
    def __init__(self, request: EventRequest, creator: Event, lookahead: float):
        super().__init__(
            f"event of type {creator.type_id} at t={creator.time} (lookahead {lookahead}) "
            f"requested type {request.type_id} at t={request.time} < {creator.time + lookahead}"
        )
        self.request = request
        self.creator = creator
        self.lookahead = lookahead


class EmptyQueue(EngineError):
    pass


class MissingBatchEntry(EngineError):
    pass


class UnknownEventType(ModelError):
    pass


@dataclass
class EngineConfig:
    max_batch_len: int = 1
    baseline: bool = False
    end_time: float | None = None
    record_trace: bool = False
    # None picks the compiled loop whenever the table was built with numba
    compiled: bool | None = None

    def __post_init__(self):
        if self.max_batch_len < 1:
            raise ValueError("max_batch_len must be >= 1")

    @classmethod
    def batched(cls, n: int, **kw) -> "EngineConfig":
        return cls(max_batch_len=n, **kw)

    @classmethod
    def one_by_one(cls, **kw) -> "EngineConfig":
        return cls(max_batch_len=1, baseline=True, **kw)

    @property
    def effective_len(self) -> int:
        return 1 if self.baseline else self.max_batch_len


@dataclass
class RunStats:
    events_executed: int = 0
    batches_executed: int = 0
    wall_time: float = 0.0
    trace: list[tuple[float, int, int]] | None = None
    batch_lengths: list[int] | None = None

    @property
    def avg_batch_len(self) -> float:
        if self.batches_executed == 0:
            return 0.0
        return self.events_executed / self.batches_executed

    @property
    def wall_time_ns(self) -> int:
        return int(round(self.wall_time * 1e9))

    def batches(self) -> list[list[tuple[float, int, int]]]:
        """The trace split into executed batches."""
        if self.trace is None or self.batch_lengths is None:
            raise ValueError("run was not recorded; set EngineConfig(record_trace=True)")
        out, i = [], 0
        for k in self.batch_lengths:
            out.append(self.trace[i : i + k])
            i += k
        return out


def window_admits(t_next: float, t_max: float) -> bool:
    """An event exactly at ``t_max`` could tie with a child of the batch, so
    admission is strict."""
    return t_next < t_max


class Engine:
    """One simulation run over a composed batch table.  Not thread-safe;
    several engines may share one table."""

    def __init__(self, model: ModelDefinition, table: BatchTable, cfg: EngineConfig | None = None):
        validate_model(model)
        cfg = cfg or EngineConfig(max_batch_len=table.max_batch_len)
        if table.model is not model and table.model.handlers != model.handlers:
            raise ValueError("batch table was generated for a different model")
        if cfg.effective_len > table.max_batch_len:
            raise ValueError(
                f"engine batch length {cfg.effective_len} exceeds table length {table.max_batch_len}"
            )
        self.model = model
        self.table = table
        self.cfg = cfg
        self.state = np.ascontiguousarray(np.array(model.initial_state, copy=True))
        self._la = [0.0] + [float(model.lookaheads[t]) for t in model.type_ids()]
        self._heap: list[tuple[float, int, int, float]] = []
        self._seq = 0
        self._out = new_emit_buffer(model.max_emits * table.max_batch_len)
        self.now = -math.inf

    # -- future event set -------------------------------------------------

    def __len__(self):
        return len(self._heap)

    def pending(self) -> list[Event]:
        return [Event(t, s, ty, p) for t, s, ty, p in sorted(self._heap)]

    def schedule(
        self,
        type_id: int,
        time: float,
        payload: float = 0.0,
        creator: Event | None = None,
    ) -> Event:
        if not 1 <= type_id <= self.model.alphabet_size:
            raise UnknownEventType(f"event type {type_id} is not registered")
        time = float(time)
        if creator is not None:
            la = self._la[creator.type_id]
            if time < creator.time + la:
                raise LookaheadViolation(EventRequest(type_id, time, payload), creator, la)
        ev = Event(time, self._seq, int(type_id), float(payload))
        heapq.heappush(self._heap, (ev.time, ev.seq, ev.type_id, ev.payload))
        self._seq += 1
        return ev

    def schedule_all(self, events: Iterable) -> None:
        """Schedule initial events in the given order.  Accepts :class:`Event`
        objects (their seq is reassigned) or ``(type_id, time[, payload])``."""
        for ev in events:
            if isinstance(ev, Event):
                self.schedule(ev.type_id, ev.time, ev.payload)
            else:
                self.schedule(*ev)

    # -- extraction -------------------------------------------------------

    def extract_batch(self) -> tuple[list[Event], int]:
        heap = self._heap
        if not heap:
            raise EmptyQueue("no pending events")
        end = math.inf if self.cfg.end_time is None else self.cfg.end_time
        n = self.cfg.effective_len
        base = self.table.cfg.base
        t, s, ty, p = heapq.heappop(heap)
        batch = [Event(t, s, ty, p)]
        t_max = t + self._la[ty]
        bid, mul = ty, base
        while len(batch) < n and heap:
            nt = heap[0][0]
            if not window_admits(nt, t_max) or nt > end:
                break
            t, s, ty, p = heapq.heappop(heap)
            batch.append(Event(t, s, ty, p))
            bid += ty * mul
            mul *= base
            t_max = min(t_max, t + self._la[ty])
        return batch, bid

    def execute_batch(self, batch: list[Event], bid: int) -> list[Event]:
        """Run one extracted batch and insert its children."""
        if not 0 < bid < len(self.table.entries):
            raise MissingBatchEntry(f"no composed batch for id {bid}")
        entry = self.table.entries[bid]
        args = []
        for ev in batch:
            args.append(ev.time)
            args.append(ev.payload)
        with np.errstate(over="ignore"):
            count = entry.fn(self.state, self._out, *args)
        self.now = batch[-1].time
        return self._insert_children(batch, count) if count else []

    def _insert_children(self, batch, count) -> list[Event]:
        out = self._out
        capacity = (out.shape[0] - EMIT_HEADER) // EMIT_WIDTH
        if count > capacity:
            out[0] = 0.0
            raise EmitOverflow(count, capacity)
        created = []
        for i in range(count):
            j = EMIT_HEADER + EMIT_WIDTH * i
            ctype = int(out[j])
            creator = batch[int(out[j + 3])]
            created.append(self.schedule(ctype, out[j + 1], out[j + 2], creator=creator))
        out[0] = 0.0
        return created

    # -- main loop --------------------------------------------------------

    def run(self) -> tuple[np.ndarray, RunStats]:
        use_compiled = self.cfg.compiled
        if use_compiled is None:
            use_compiled = self.table.backend == "numba"
        if use_compiled:
            if self.table.backend != "numba":
                raise ValueError("the compiled loop needs a table built with the numba backend")
            return self._run_compiled()
        return self._run_interpreted()

    def _run_interpreted(self):
        heap = self._heap
        pop = heapq.heappop
        la = self._la
        fns = [e.fn for e in self.table.entries]
        state, out = self.state, self._out
        end = math.inf if self.cfg.end_time is None else self.cfg.end_time
        n = self.cfg.effective_len
        base = self.table.cfg.base
        record = self.cfg.record_trace
        trace, lengths = ([], []) if record else (None, None)
        n_events = n_batches = 0

        t0 = time.perf_counter()
        with np.errstate(over="ignore"):
            while heap and heap[0][0] <= end:
                first = pop(heap)
                t, _, ty, p = first
                batch = [first]
                args = [t, p]
                t_max = t + la[ty]
                bid, mul = ty, base
                while len(batch) < n and heap:
                    nt = heap[0][0]
                    if not nt < t_max or nt > end:
                        break
                    item = pop(heap)
                    t, _, ty, p = item
                    batch.append(item)
                    args.append(t)
                    args.append(p)
                    bid += ty * mul
                    mul *= base
                    if t + la[ty] < t_max:
                        t_max = t + la[ty]
                count = fns[bid](state, out, *args)
                n_events += len(batch)
                n_batches += 1
                if record:
                    trace.extend((b[0], b[1], b[2]) for b in batch)
                    lengths.append(len(batch))
                if count:
                    self._insert_children([Event(*b) for b in batch], count)
                self.now = batch[-1][0]
        wall = time.perf_counter() - t0
        return self.state, RunStats(n_events, n_batches, wall, trace, lengths)

    def _run_compiled(self):
        from . import _kernel

        kernel = _kernel.get_kernel(self.table, self.cfg.effective_len == 1 and self.cfg.baseline)
        heap, size = _kernel.heap_from_pending(self._heap)
        la = np.asarray(self._la, dtype=np.float64)
        end = math.inf if self.cfg.end_time is None else float(self.cfg.end_time)
        n = self.cfg.effective_len
        trace_cap = size + 16 if self.cfg.record_trace else 0

        t0 = time.perf_counter()
        res = kernel(
            self.state, self._out, heap, size, self._seq, la, n,
            self.table.cfg.base, end, self.cfg.record_trace, trace_cap,
        )
        wall = time.perf_counter() - t0

        (n_events, n_batches, next_seq, err, info, heap, size,
         tr_t, tr_s, tr_ty, lens, n_lens, last_t) = res
        self._seq = int(next_seq)
        self._heap = _kernel.pending_from_heap(heap, size)
        if n_batches:
            self.now = float(last_t)
        stats = RunStats(int(n_events), int(n_batches), wall)
        if self.cfg.record_trace:
            m = int(n_events)
            stats.trace = list(zip(tr_t[:m].tolist(), tr_s[:m].tolist(), tr_ty[:m].tolist()))
            stats.batch_lengths = lens[: int(n_lens)].tolist()
        _kernel.raise_for_error(int(err), info, self)
        return self.state, stats


def run(
    model: ModelDefinition,
    table: BatchTable,
    cfg: EngineConfig,
    initial_events: Iterable = (),
) -> tuple[np.ndarray, RunStats]:
    """Simulate ``model`` from its initial state until no events remain or
    ``cfg.end_time`` is passed."""
    eng = Engine(model, table, cfg)
    eng.schedule_all(initial_events)
    return eng.run()
