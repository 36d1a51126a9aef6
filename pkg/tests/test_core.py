import numpy as np
import pytest

from batchdes.core import (
    EmitOverflow,
    EmptyAlphabet,
    Event,
    EventRequest,
    LookaheadTable,
    MissingLookahead,
    ModelDefinition,
    NegativeLookahead,
    drain_emit_buffer,
    emit,
    new_emit_buffer,
    validate_model,
)


def h_a(state, event, out):
    state[0] += 1


def h_b(state, event, out):
    state[0] -= 1


def test_validate_ok():
    m = ModelDefinition([h_a, h_b], {1: 10, 2: 10}, np.zeros(1))
    assert validate_model(m) is m


def test_validate_empty():
    with pytest.raises(EmptyAlphabet):
        validate_model(ModelDefinition([], {}, np.zeros(1)))


def test_validate_missing_lookahead():
    with pytest.raises(MissingLookahead) as exc:
        validate_model(ModelDefinition([h_a, h_b], {1: 10}, np.zeros(1)))
    assert exc.value.type_id == 2


def test_validate_negative_lookahead():
    with pytest.raises(NegativeLookahead):
        validate_model(ModelDefinition([h_a, h_b], {1: 1.0, 2: -0.5}, np.zeros(1)))


def test_zero_lookahead_is_legal():
    validate_model(ModelDefinition([h_a], {1: 0.0}, np.zeros(1)))


def test_handler_roundtrip():
    m = ModelDefinition([h_a, h_b], [1.0, 2.0], np.zeros(1))
    assert [m.handler_for(t) for t in m.type_ids()] == [h_a, h_b]
    with pytest.raises(KeyError):
        m.handler_for(0)
    assert m.lookaheads[2] == 2.0


def test_lookahead_table_dense():
    la = LookaheadTable({1: 4, 2: 0.5})
    assert la.as_array(2).tolist() == [0.0, 4.0, 0.5]
    assert len(la) == 2 and set(la) == {1, 2}


def test_event_order_by_time_then_seq():
    evs = [Event(2.0, 0, 1), Event(1.0, 5, 2), Event(1.0, 3, 1)]
    assert [(e.time, e.seq) for e in sorted(evs)] == [(1.0, 3), (1.0, 5), (2.0, 0)]


def test_emit_and_drain():
    out = new_emit_buffer(2)
    emit(out, 2, 5.0, 1.5, 1)
    emit(out, 1, 6.0)
    assert drain_emit_buffer(out) == [EventRequest(2, 5.0, 1.5, 1), EventRequest(1, 6.0, 0.0, 0)]
    assert out[0] == 0


def test_emit_overflow_is_counted():
    out = new_emit_buffer(1)
    emit(out, 1, 1.0)
    emit(out, 1, 2.0)
    assert out[0] == 2
    with pytest.raises(EmitOverflow):
        drain_emit_buffer(out)
