"""Discrete-event simulation with ahead-of-runtime composed event batches."""
from .analytics import SpeedupModel, expected_batched_cost, expected_unbatched_cost, max_speedup
from .codec import CodecConfig, decode, encode, is_reachable, redundant_batch_count, total_batch_count
from .composer import BatchTable, generate_batch_table, report_generation_stats
from .core import Event, HandlerOutcome, LookaheadTable, ModelDefinition, emit, validate_model
from .engine import Engine, EngineConfig, LookaheadViolation, RunStats, run, window_admits

__version__ = "0.1.0"
