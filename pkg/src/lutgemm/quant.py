"""Uniform and codebook quantization of real tensors to sub-byte codes.

Codes are carried as unsigned bit patterns. A signed uniform code ``q`` is
stored as ``q + 2**(bits - 1)``; the value map (``QuantParams`` or
``Codebook``) knows how to turn a pattern back into a real value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

SUPPORTED_BITS = (2, 3, 4)


@dataclass(frozen=True)
class QuantParams:
    """Per-tensor uniform quantizer: ``q = clip(round(scale * x + zero_point))``."""

    scale: float
    zero_point: float = 0.0
    bits: int = 2
    signed: bool = True

    def __post_init__(self):
        if self.bits not in SUPPORTED_BITS:
            raise ValueError(f"bits must be one of {SUPPORTED_BITS}, got {self.bits}")
        if not np.isfinite(self.scale) or self.scale == 0:
            raise ValueError(f"scale must be finite and non-zero, got {self.scale}")
        if not np.isfinite(self.zero_point):
            raise ValueError(f"zero_point must be finite, got {self.zero_point}")

    @property
    def lo(self) -> int:
        return -(1 << (self.bits - 1)) if self.signed else 0

    @property
    def hi(self) -> int:
        return (1 << (self.bits - 1)) - 1 if self.signed else (1 << self.bits) - 1

    @property
    def offset(self) -> int:
        """Amount added to a logical code to obtain its bit pattern."""
        return -self.lo

    def values(self) -> np.ndarray:
        """Real value of every bit pattern, indexed by pattern."""
        logical = np.arange(self.lo, self.hi + 1, dtype=np.float64)
        return (logical - self.zero_point) / self.scale

    def representable_range(self) -> tuple[float, float]:
        """Interval of inputs that quantize without clipping."""
        a = (self.lo - 0.5 - self.zero_point) / self.scale
        b = (self.hi + 0.5 - self.zero_point) / self.scale
        return (min(a, b), max(a, b))


class Codebook:
    """Non-uniform quantizer with one real level per code (index = pattern)."""

    signed = False
    offset = 0

    def __init__(self, levels):
        values = np.asarray(levels, dtype=np.float64).ravel()
        n = values.size
        bits = n.bit_length() - 1
        if n == 0 or (1 << bits) != n or bits not in SUPPORTED_BITS:
            raise ValueError(f"codebook needs 2**b levels with b in {SUPPORTED_BITS}, got {n}")
        if not np.all(np.isfinite(values)):
            raise ValueError("codebook levels must be finite")
        self.levels = tuple(float(v) for v in values)
        self.bits = bits

    def values(self) -> np.ndarray:
        return np.array(self.levels, dtype=np.float64)

    def __eq__(self, other):
        return isinstance(other, Codebook) and self.levels == other.levels

    def __hash__(self):
        return hash(self.levels)

    def __repr__(self):
        return f"Codebook({list(self.levels)})"


ValueMap = Union[QuantParams, Codebook]


@dataclass(frozen=True, eq=False)
class CodeTensor:
    """Unpacked codes, one unsigned bit pattern per logical element.

    ``signed`` only records how the patterns were produced; ``logical()``
    undoes the re-indexing.
    """

    codes: np.ndarray
    bits: int
    signed: bool = False

    def __post_init__(self):
        codes = np.asarray(self.codes)
        if codes.size and (codes.min() < 0 or codes.max() > (1 << self.bits) - 1):
            raise ValueError(f"code patterns out of range for {self.bits}-bit codes")
        object.__setattr__(self, "codes", codes.astype(np.uint8, copy=False))

    @property
    def rows(self) -> int:
        return self.codes.shape[0]

    @property
    def cols(self) -> int:
        return self.codes.shape[1]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.codes.shape

    def logical(self) -> np.ndarray:
        off = (1 << (self.bits - 1)) if self.signed else 0
        return self.codes.astype(np.int16) - off

    @property
    def T(self) -> "CodeTensor":
        return CodeTensor(np.ascontiguousarray(self.codes.T), self.bits, self.signed)

    def __eq__(self, other):
        if not isinstance(other, CodeTensor):
            return NotImplemented
        return (
            self.bits == other.bits
            and self.signed == other.signed
            and np.array_equal(self.codes, other.codes)
        )


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer, ties away from zero (``np.round`` rounds to even)."""
    x = np.asarray(x, dtype=np.float64)
    return np.trunc(x + np.copysign(0.5, x))


def _check_finite(x: np.ndarray) -> None:
    if np.isfinite(x).all():
        return
    bad = ~np.isfinite(x)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"non-finite input at index {idx}: {x[idx]!r}")


def quantize_uniform(x, p: QuantParams) -> CodeTensor:
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    y = x * p.scale
    y += p.zero_point
    y += np.copysign(0.5, y)
    np.trunc(y, out=y)
    np.clip(y, p.lo, p.hi, out=y)
    y += p.offset
    return CodeTensor(y.astype(np.uint8), p.bits, p.signed)


def dequantize_uniform(c: CodeTensor, p: QuantParams) -> np.ndarray:
    if c.bits != p.bits:
        raise ValueError(f"code tensor is {c.bits}-bit, params are {p.bits}-bit")
    return value_table(p)[c.codes]


def value_table(vmap: ValueMap) -> np.ndarray:
    return vmap.values()


def _pattern(code: int, vmap: ValueMap) -> int:
    pattern = int(code) + vmap.offset
    if not 0 <= pattern < (1 << vmap.bits):
        raise ValueError(f"code {code} outside the {vmap.bits}-bit range of {vmap!r}")
    return pattern


def code_value(code: int, vmap: ValueMap) -> float:
    """Real value of a logical code (signed codes are negative for uniform maps)."""
    return float(vmap.values()[_pattern(code, vmap)])


def zero_code(vmap: ValueMap) -> int | None:
    """Bit pattern whose value is exactly 0.0, or None when no such code exists."""
    hits = np.flatnonzero(vmap.values() == 0.0)
    return int(hits[0]) if hits.size else None


def is_integer_valued(vmap: ValueMap) -> bool:
    levels = vmap.values()
    return bool(np.all(levels == np.round(levels)))
