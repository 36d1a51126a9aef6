import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from batchdes import codec
from batchdes.composer import generate_batch_table
from batchdes.core import EmitOverflow, Event, ModelDefinition, emit
from batchdes.engine import (
    EmptyQueue,
    Engine,
    EngineConfig,
    LookaheadViolation,
    UnknownEventType,
    run,
    window_admits,
)

from randmodels import random_model, reference_run


def count_handler(state, event, out):
    state[0] = state[0] + 1


def four_type_model():
    return ModelDefinition([count_handler] * 4, {1: 4.0, 2: 3.0, 3: 10.0, 4: 1.0}, np.zeros(1, dtype=np.int64))


@pytest.fixture(scope="module")
def four_table():
    return generate_batch_table(four_type_model(), 4, backend="python")


# -- scheduling ---------------------------------------------------------------

def test_schedule_at_lookahead_boundary_is_allowed(four_table):
    eng = Engine(four_table.model, four_table, EngineConfig.batched(4))
    creator = Event(2.0, 0, 1)
    ev = eng.schedule(2, 6.0, creator=creator)
    assert ev.time == 6.0 and len(eng) == 1


def test_schedule_inside_lookahead_raises(four_table):
    eng = Engine(four_table.model, four_table, EngineConfig.batched(4))
    with pytest.raises(LookaheadViolation) as info:
        eng.schedule(2, 5.5, creator=Event(2.0, 0, 1))
    assert info.value.lookahead == 4.0


@pytest.mark.parametrize("bad", [0, 5, -1])
def test_schedule_unknown_type(four_table, bad):
    eng = Engine(four_table.model, four_table)
    with pytest.raises(UnknownEventType):
        eng.schedule(bad, 0.0)


def test_seq_is_fifo(four_table):
    eng = Engine(four_table.model, four_table, EngineConfig.batched(4))
    eng.schedule_all([(1, 1.0), (2, 1.0), (3, 0.5)])
    assert [(e.time, e.type_id) for e in eng.pending()] == [(0.5, 3), (1.0, 1), (1.0, 2)]


# -- batch extraction ---------------------------------------------------------

@pytest.mark.parametrize(
    "lt, lr",
    [(0.0, 3.0), (0.0, 4.0), (1.0, 2.0), (0.0, math.inf), (2.0, 2.0), (3.0, 2.0)],
)
def test_window_admits(lt, lr):
    assert window_admits(lt, lr) == (lt < lr)


def test_extract_batch_mixed_lookaheads(four_table):
    eng = Engine(four_table.model, four_table, EngineConfig.batched(4))
    eng.schedule_all([(1, 0.0), (2, 2.0), (3, 3.0), (4, 5.0)])
    batch, bid = eng.extract_batch()
    assert [e.type_id for e in batch] == [1, 2, 3]
    assert bid == codec.encode([1, 2, 3], four_table.cfg)
    assert len(eng) == 1


def test_extract_batch_zero_lookahead_is_singleton():
    model = ModelDefinition([count_handler] * 2, [0.0, 5.0], np.zeros(1, dtype=np.int64))
    table = generate_batch_table(model, 3, backend="python")
    eng = Engine(model, table, EngineConfig.batched(3))
    eng.schedule_all([(1, 0.0), (2, 0.0), (2, 0.1)])
    batch, _ = eng.extract_batch()
    assert len(batch) == 1
    batch, _ = eng.extract_batch()
    assert [e.time for e in batch] == [0.0, 0.1]


def test_extract_batch_respects_max_len(four_table):
    eng = Engine(four_table.model, four_table, EngineConfig.batched(2))
    eng.schedule_all([(3, 0.0), (3, 1.0), (3, 2.0)])
    batch, _ = eng.extract_batch()
    assert len(batch) == 2


def test_extract_single_event(four_table):
    eng = Engine(four_table.model, four_table, EngineConfig.batched(4))
    eng.schedule(2, 7.0)
    batch, bid = eng.extract_batch()
    assert len(batch) == 1 and bid == 2


def test_extract_batch_stops_at_tie_with_window_bound(four_table):
    eng = Engine(four_table.model, four_table, EngineConfig.batched(4))
    eng.schedule_all([(4, 0.0), (4, 1.0)])
    batch, _ = eng.extract_batch()
    assert len(batch) == 1


def test_extract_from_empty_queue(four_table):
    with pytest.raises(EmptyQueue):
        Engine(four_table.model, four_table).extract_batch()


def test_engine_rejects_table_too_short(four_table):
    with pytest.raises(ValueError):
        Engine(four_table.model, four_table, EngineConfig.batched(5))


# -- whole runs ---------------------------------------------------------------

def test_run_with_no_events(four_table):
    state, stats = run(four_table.model, four_table, EngineConfig.batched(4))
    assert state.tolist() == [0]
    assert stats.events_executed == 0 and stats.avg_batch_len == 0.0


def test_end_time_stops_run(four_table):
    cfg = EngineConfig.batched(4, end_time=2.0, record_trace=True)
    eng = Engine(four_table.model, four_table, cfg)
    eng.schedule_all([(3, float(t)) for t in range(6)])
    state, stats = eng.run()
    assert int(state[0]) == 3
    assert [e.time for e in eng.pending()] == [3.0, 4.0, 5.0]


def test_batches_need_trace(four_table):
    _, stats = run(four_table.model, four_table, EngineConfig.batched(4), [(1, 0.0)])
    with pytest.raises(ValueError):
        stats.batches()


def runs_agree(model, events, n, backend="python", compiled=None):
    table = generate_batch_table(model, n, backend=backend)
    base = run(model, table, EngineConfig.one_by_one(record_trace=True, compiled=compiled), events)
    bat = run(model, table, EngineConfig.batched(n, record_trace=True, compiled=compiled), events)
    return table, base, bat


@settings(max_examples=40)
@given(st.integers(0, 100_000), st.sampled_from([1, 2, 3]))
def test_batched_matches_baseline_and_reference(seed, n):
    model, events = random_model(seed)
    _, (s_base, st_base), (s_bat, st_bat) = runs_agree(model, events, n)
    s_ref, tr_ref = reference_run(model, events)
    assert s_bat.tolist() == s_base.tolist() == s_ref.tolist()
    assert st_bat.trace == st_base.trace
    assert [(t, ty) for t, _, ty in st_bat.trace] == [(t, ty) for t, _, ty in tr_ref]
    assert st_base.avg_batch_len in (0.0, 1.0)


@settings(max_examples=40)
@given(st.integers(0, 100_000), st.sampled_from([2, 3]))
def test_batches_are_safe_windows(seed, n):
    model, events = random_model(seed)
    table = generate_batch_table(model, n, backend="python")
    _, stats = run(model, table, EngineConfig.batched(n, record_trace=True), events)
    times = [t for t, _, _ in stats.trace]
    assert times == sorted(times)
    for batch in stats.batches():
        assert 1 <= len(batch) <= n
        t_max = math.inf
        for t, _, ty in batch:
            assert t < t_max or t_max == math.inf
            t_max = min(t_max, t + model.lookaheads[ty])


def test_n1_batched_equals_baseline():
    model, events = random_model(11)
    _, (a, sa), (b, sb) = runs_agree(model, events, 1)
    assert a.tolist() == b.tolist() and sa.trace == sb.trace


@pytest.mark.parametrize("seed", [3, 5, 8])
def test_compiled_loop_matches_interpreted(seed):
    model, events = random_model(seed, max_types=2)
    table = generate_batch_table(model, 2, backend="numba")
    for cfg_factory in (lambda c: EngineConfig.one_by_one(record_trace=True, compiled=c),
                        lambda c: EngineConfig.batched(2, record_trace=True, compiled=c)):
        s1, st1 = run(model, table, cfg_factory(True), events)
        s2, st2 = run(model, table, cfg_factory(False), events)
        assert s1.tolist() == s2.tolist()
        assert st1.trace == st2.trace
        assert st1.batch_lengths == st2.batch_lengths
    s_ref, _ = reference_run(model, events)
    assert s1.tolist() == s_ref.tolist()


def test_compiled_loop_end_time_and_resume(poc_table2):
    from batchdes.poc_model import INCREMENT, PocState

    model = poc_table2.model
    eng = Engine(model, poc_table2, EngineConfig.batched(2, end_time=4.5))
    eng.state[:] = PocState(0, 1).array
    eng.schedule_all([(INCREMENT, float(t)) for t in range(10)])
    state, stats = eng.run()
    assert stats.events_executed == 5 and len(eng) == 5
    assert int(state[0]) == 2**5 - 1


# -- failure modes ------------------------------------------------------------

def early_child(state, event, out):
    state[0] = state[0] + 1
    emit(out, 1, event.time + 0.5)


def late_child(state, event, out):
    if state[0] < 3:
        state[0] = state[0] + 1
        emit(out, 1, event.time + 2.0)


def two_children(state, event, out):
    emit(out, 1, event.time + 5.0)
    emit(out, 1, event.time + 6.0)


@pytest.mark.parametrize("backend, compiled", [("python", False), ("numba", True), ("numba", False)])
@pytest.mark.parametrize("baseline", [True, False])
def test_lookahead_violation_is_raised(backend, compiled, baseline):
    model = ModelDefinition([early_child], [1.0], np.zeros(1, dtype=np.int64), max_emits=1)
    table = generate_batch_table(model, 2, backend=backend)
    cfg = EngineConfig(max_batch_len=2, baseline=baseline, compiled=compiled)
    with pytest.raises(LookaheadViolation) as info:
        run(model, table, cfg, [(1, 0.0)])
    assert info.value.creator.time == 0.0
    assert info.value.request.time == 0.5


def test_children_are_scheduled():
    model = ModelDefinition([late_child], [2.0], np.zeros(1, dtype=np.int64), max_emits=1)
    table = generate_batch_table(model, 2, backend="python")
    state, stats = run(model, table, EngineConfig.batched(2, record_trace=True), [(1, 0.0)])
    assert int(state[0]) == 3
    assert [t for t, _, _ in stats.trace] == [0.0, 2.0, 4.0, 6.0]


@pytest.mark.parametrize("backend", ["python", "numba"])
def test_emit_overflow(backend):
    model = ModelDefinition([two_children], [1.0], np.zeros(1, dtype=np.int64), max_emits=1)
    table = generate_batch_table(model, 1, backend=backend)
    with pytest.raises(EmitOverflow):
        run(model, table, EngineConfig.batched(1), [(1, 0.0)])


def test_invalid_max_batch_len():
    with pytest.raises(ValueError):
        EngineConfig(max_batch_len=0)
