"""Batch identifiers as base-(|Σ|+1) integers.

Digit 0 is the "no event" symbol.  The least-significant digit is the first
event executed, so decoding peels events off in execution order.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

# ids travel through int64 in the compiled engine
MAX_BATCH_ID = 2**63 - 1


class CodecError(ValueError):
    pass


class SequenceTooLong(CodecError):
    pass


class InvalidTypeId(CodecError):
    pass


class IdOutOfRange(CodecError):
    pass


class ConfigTooLarge(CodecError):
    pass


def _geometric_sum(base: int, n: int) -> int:
    """sum_{i=1}^{n} base**i"""
    return sum(base**i for i in range(1, n + 1))


def _exceeds(base: int, n: int, cap: int) -> bool:
    # stops early so absurd configs fail fast instead of building huge ints
    total, term = 0, 1
    for _ in range(n):
        term *= base
        total += term
        if total > cap:
            return True
    return False


@dataclass(frozen=True)
class CodecConfig:
    alphabet_size: int
    max_batch_len: int

    def __post_init__(self):
        if self.alphabet_size < 1:
            raise CodecError("alphabet_size must be >= 1")
        if self.max_batch_len < 1:
            raise CodecError("max_batch_len must be >= 1")
        if _exceeds(self.base, self.max_batch_len, MAX_BATCH_ID):
            raise ConfigTooLarge(
                f"batch ids for |Σ|={self.alphabet_size}, n={self.max_batch_len} overflow int64"
            )

    @property
    def base(self) -> int:
        return self.alphabet_size + 1

    @property
    def max_id(self) -> int:
        return total_batch_count(self)


def encode(seq: Sequence[int], cfg: CodecConfig) -> int:
    if len(seq) > cfg.max_batch_len:
        raise SequenceTooLong(f"sequence of length {len(seq)} exceeds n={cfg.max_batch_len}")
    base = cfg.base
    bid = 0
    for t in reversed(seq):
        if not 1 <= t <= cfg.alphabet_size:
            raise InvalidTypeId(f"event type {t} outside [1, {cfg.alphabet_size}]")
        bid = bid * base + t
    return bid


def decode(bid: int, cfg: CodecConfig) -> list[int]:
    if not 0 <= bid <= cfg.max_id:
        raise IdOutOfRange(f"batch id {bid} outside [0, {cfg.max_id}]")
    base = cfg.base
    seq = []
    while bid:
        bid, digit = divmod(bid, base)
        if digit:
            seq.append(digit)
    return seq


def total_batch_count(cfg: CodecConfig) -> int:
    return _geometric_sum(cfg.base, cfg.max_batch_len)


def reachable_batch_count(cfg: CodecConfig) -> int:
    return _geometric_sum(cfg.alphabet_size, cfg.max_batch_len)


def redundant_batch_count(cfg: CodecConfig) -> tuple[int, Fraction]:
    total = total_batch_count(cfg)
    redundant = total - reachable_batch_count(cfg)
    return redundant, Fraction(redundant, total)


def is_reachable(bid: int, cfg: CodecConfig) -> bool:
    """True iff ``bid`` has no ν digit below its leading digit (and bid > 0)."""
    if not 0 <= bid <= cfg.max_id:
        raise IdOutOfRange(f"batch id {bid} outside [0, {cfg.max_id}]")
    if bid == 0:
        return False
    base = cfg.base
    while bid:
        bid, digit = divmod(bid, base)
        if digit == 0:
            return False
    return True
