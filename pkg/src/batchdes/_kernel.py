"""Compiled event loop for numba-backed batch tables.

The future event set is a binary min-heap over a record array keyed by
``(time, seq)``.  One loop is compiled per (table, mode) and calls the
table's generated dispatch tree, which calls the composed batches directly.
"""
from __future__ import annotations

import numba
import numpy as np
from numba import njit

from .core import EMIT_HEADER, EMIT_WIDTH, EmitOverflow, Event, EventRequest

EVENT_DTYPE = np.dtype([("t", np.float64), ("s", np.int64), ("ty", np.int64), ("p", np.float64)])

ERR_NONE = 0
ERR_LOOKAHEAD = 1
ERR_OVERFLOW = 2
ERR_MISSING = 3
ERR_TYPE = 4


@njit(cache=True)
def _sift_down(h, i, size):
    x_t = h[i].t
    x_s = h[i].s
    x_ty = h[i].ty
    x_p = h[i].p
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        m = left
        r = left + 1
        if r < size and (h[r].t < h[left].t or (h[r].t == h[left].t and h[r].s < h[left].s)):
            m = r
        if h[m].t < x_t or (h[m].t == x_t and h[m].s < x_s):
            h[i] = h[m]
            i = m
        else:
            break
    h[i].t = x_t
    h[i].s = x_s
    h[i].ty = x_ty
    h[i].p = x_p


@njit(cache=True)
def _sift_up(h, i):
    x_t = h[i].t
    x_s = h[i].s
    x_ty = h[i].ty
    x_p = h[i].p
    while i > 0:
        parent = (i - 1) // 2
        if x_t < h[parent].t or (x_t == h[parent].t and x_s < h[parent].s):
            h[i] = h[parent]
            i = parent
        else:
            break
    h[i].t = x_t
    h[i].s = x_s
    h[i].ty = x_ty
    h[i].p = x_p


@njit(cache=True)
def _heapify(h, size):
    for i in range(size // 2 - 1, -1, -1):
        _sift_down(h, i, size)


@njit(cache=True)
def _grow_heap(h):
    g = np.empty(max(2 * h.shape[0], 16), dtype=h.dtype)
    g[: h.shape[0]] = h
    return g


@njit(cache=True)
def _grow_f(a):
    g = np.empty(max(2 * a.shape[0], 16), dtype=a.dtype)
    g[: a.shape[0]] = a
    return g


@njit(cache=True)
def _grow_i(a):
    g = np.empty(max(2 * a.shape[0], 16), dtype=a.dtype)
    g[: a.shape[0]] = a
    return g


def heap_from_pending(pending: list) -> tuple[np.ndarray, int]:
    size = len(pending)
    h = np.zeros(max(16, size + size // 4), dtype=EVENT_DTYPE)
    if size:
        h[:size] = pending
        _heapify(h, size)
    return h, size


def pending_from_heap(h: np.ndarray, size: int) -> list:
    import heapq

    items = [(float(r["t"]), int(r["s"]), int(r["ty"]), float(r["p"])) for r in h[:size]]
    heapq.heapify(items)
    return items


def _make_kernel(dispatch, baseline: bool):
    @njit
    def kernel(state, out, h, size, next_seq, la, n, base, end_time, record, trace_cap):
        bt = np.zeros(n, dtype=np.float64)
        bp = np.zeros(n, dtype=np.float64)
        bs = np.zeros(n, dtype=np.int64)
        bty = np.zeros(n, dtype=np.int64)
        info = np.zeros(8, dtype=np.float64)
        tr_t = np.zeros(trace_cap, dtype=np.float64)
        tr_s = np.zeros(trace_cap, dtype=np.int64)
        tr_ty = np.zeros(trace_cap, dtype=np.int64)
        lens = np.zeros(trace_cap, dtype=np.int64)
        capacity = (out.shape[0] - EMIT_HEADER) // EMIT_WIDTH
        n_types = la.shape[0]
        n_events = 0
        n_batches = 0
        err = 0
        last_t = 0.0
        while size > 0:
            if h[0].t > end_time:
                break
            k = 0
            bid = 0
            mul = 1
            t_max = np.inf
            while True:
                t = h[0].t
                ty = h[0].ty
                bt[k] = t
                bp[k] = h[0].p
                bs[k] = h[0].s
                bty[k] = ty
                size -= 1
                if size > 0:
                    h[0] = h[size]
                    _sift_down(h, 0, size)
                bid += ty * mul
                mul *= base
                k += 1
                if t + la[ty] < t_max:
                    t_max = t + la[ty]
                if baseline or k >= n or size == 0:
                    break
                nt = h[0].t
                if not nt < t_max or nt > end_time:
                    break
            count = dispatch(bid, state, out, bt, bp)
            if count < 0:
                err = 3
                info[0] = bid
                break
            if record:
                if n_events + k > tr_t.shape[0]:
                    tr_t = _grow_f(tr_t)
                    tr_s = _grow_i(tr_s)
                    tr_ty = _grow_i(tr_ty)
                if n_batches >= lens.shape[0]:
                    lens = _grow_i(lens)
                for i in range(k):
                    tr_t[n_events + i] = bt[i]
                    tr_s[n_events + i] = bs[i]
                    tr_ty[n_events + i] = bty[i]
                lens[n_batches] = k
            n_events += k
            n_batches += 1
            last_t = bt[k - 1]
            if count > 0:
                if count > capacity:
                    err = 2
                    info[0] = count
                    info[1] = capacity
                    break
                for i in range(count):
                    j = EMIT_HEADER + EMIT_WIDTH * i
                    ctype = np.int64(out[j])
                    ctime = out[j + 1]
                    cpay = out[j + 2]
                    slot = np.int64(out[j + 3])
                    if ctype < 1 or ctype >= n_types:
                        err = 4
                        info[0] = ctype
                        break
                    if ctime < bt[slot] + la[bty[slot]]:
                        err = 1
                        info[0] = bt[slot]
                        info[1] = bs[slot]
                        info[2] = bty[slot]
                        info[3] = ctype
                        info[4] = ctime
                        info[5] = cpay
                        info[6] = slot
                        break
                    if size == h.shape[0]:
                        h = _grow_heap(h)
                    h[size].t = ctime
                    h[size].s = next_seq
                    h[size].ty = ctype
                    h[size].p = cpay
                    _sift_up(h, size)
                    size += 1
                    next_seq += 1
                out[0] = 0.0
                if err != 0:
                    break
        return (n_events, n_batches, next_seq, err, info, h, size,
                tr_t, tr_s, tr_ty, lens, n_batches, last_t)

    return kernel


def get_kernel(table, baseline: bool):
    key = "baseline" if baseline else "batched"
    kern = table._kernels.get(key)
    if kern is None:
        kern = _make_kernel(table.namespace["_dispatch"], baseline)
        table._kernels[key] = kern
    return kern


def compile_kernels(table, state: np.ndarray | None = None) -> None:
    """Force compilation of both loops so that timing excludes it."""
    from numba import types

    if state is None:
        state = np.ascontiguousarray(table.model.initial_state)
    out = np.zeros(EMIT_HEADER + EMIT_WIDTH * max(table.model.max_emits * table.max_batch_len, 1))
    h = np.zeros(16, dtype=EVENT_DTYPE)
    la = np.zeros(table.cfg.alphabet_size + 1)
    for baseline in (False, True):
        kern = get_kernel(table, baseline)
        kern(state.copy(), out, h, 0, 0, la, 1, table.cfg.base, np.inf, False, 0)


def raise_for_error(err: int, info: np.ndarray, engine) -> None:
    if err == ERR_NONE:
        return
    from .engine import LookaheadViolation, MissingBatchEntry, UnknownEventType

    if err == ERR_LOOKAHEAD:
        creator = Event(float(info[0]), int(info[1]), int(info[2]))
        req = EventRequest(int(info[3]), float(info[4]), float(info[5]), int(info[6]))
        raise LookaheadViolation(req, creator, engine._la[creator.type_id])
    if err == ERR_OVERFLOW:
        raise EmitOverflow(int(info[0]), int(info[1]))
    if err == ERR_MISSING:
        raise MissingBatchEntry(f"no composed batch for id {int(info[0])}")
    if err == ERR_TYPE:
        raise UnknownEventType(f"event type {int(info[0])} is not registered")
    raise RuntimeError(f"compiled loop failed with code {err}")
