"""Lookup tables of precomputed weight x activation products."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .quant import SUPPORTED_BITS, ValueMap, value_table

L1_BYTES = 32 * 1024
VECTOR_BITS = 256


class EntryDomain(str, enum.Enum):
    INT8 = "int8"
    INT32 = "int32"
    REAL = "real"

    @property
    def dtype(self):
        return {"int8": np.int8, "int32": np.int32, "real": np.float64}[self.value]

    @property
    def is_integer(self) -> bool:
        return self is not EntryDomain.REAL


class LUTOverflowError(ValueError):
    """Table entries do not fit the requested integer domain."""


@dataclass(frozen=True, eq=False)
class LookupTable:
    arity: int
    index_bits: int
    entries: np.ndarray
    entry_domain: EntryDomain
    w_values: ValueMap
    a_values: ValueMap

    @property
    def bits(self) -> int:
        return self.w_values.bits

    def max_abs_entry(self) -> float:
        return self._max_abs

    @cached_property
    def _max_abs(self) -> float:
        return float(np.max(np.abs(self.entries.astype(np.float64))))

    def pair_products(self) -> np.ndarray:
        """Per-pair product table indexed by ``(w << bits) | a``, in the entry dtype."""
        return _to_domain(
            np.outer(value_table(self.w_values), value_table(self.a_values)).ravel(),
            self.entry_domain,
        )


def _to_domain(raw: np.ndarray, domain: EntryDomain) -> np.ndarray:
    if domain is EntryDomain.REAL:
        return raw.astype(np.float64)
    if not np.all(raw == np.round(raw)):
        raise ValueError(f"{domain.value} entries require integer-valued products")
    info = np.iinfo(domain.dtype)
    lo, hi = raw.min(), raw.max()
    if lo < info.min or hi > info.max:
        raise LUTOverflowError(
            f"products span [{lo:g}, {hi:g}], outside {domain.value} range [{info.min}, {info.max}]"
        )
    return raw.astype(domain.dtype)


def _check_maps(bits: int, w_values: ValueMap, a_values: ValueMap) -> None:
    for name, vm in (("weight", w_values), ("activation", a_values)):
        if vm.bits != bits:
            raise ValueError(f"{name} value map covers {vm.bits}-bit codes, expected {bits}")


def build_lut_general(bits: int, w_values: ValueMap, a_values: ValueMap, entry_domain="int8") -> LookupTable:
    if bits not in SUPPORTED_BITS:
        raise ValueError(f"unsupported bitwidth {bits}")
    domain = EntryDomain(entry_domain)
    _check_maps(bits, w_values, a_values)
    raw = np.outer(value_table(w_values), value_table(a_values)).ravel()
    return LookupTable(1, 2 * bits, _to_domain(raw, domain), domain, w_values, a_values)


def build_lut16(w_values: ValueMap, a_values: ValueMap, entry_domain="int8") -> LookupTable:
    return build_lut_general(2, w_values, a_values, entry_domain)


def build_lut65k(w_values: ValueMap, a_values: ValueMap, entry_domain="int8") -> LookupTable:
    """Table of 4-term dot products indexed by ``(w_byte << 8) | a_byte``.

    Bytes are decoded in the natural layout; rotated weights must be
    un-rotated first.
    """
    domain = EntryDomain(entry_domain)
    _check_maps(2, w_values, a_values)
    wv, av = value_table(w_values), value_table(a_values)
    idx = np.arange(1 << 16, dtype=np.uint32)
    w_byte, a_byte = idx >> 8, idx & 0xFF
    raw = np.zeros(1 << 16, dtype=np.float64)
    for j in range(4):
        raw += wv[(w_byte >> (2 * j)) & 3] * av[(a_byte >> (2 * j)) & 3]
    return LookupTable(4, 16, _to_domain(raw, domain), domain, w_values, a_values)


@dataclass(frozen=True)
class LutStorage:
    index_bits: int
    entries: int
    size_bits: int
    vector_registers_256b: int
    fits_l1: bool


def lut_storage(bits: int) -> LutStorage:
    """Storage footprint of the per-pair table for ``bits``-bit operands (8-bit entries)."""
    if bits not in SUPPORTED_BITS:
        raise ValueError(f"unsupported bitwidth {bits}")
    index_bits = 2 * bits
    entries = 1 << index_bits
    size_bits = entries * 8
    return LutStorage(
        index_bits=index_bits,
        entries=entries,
        size_bits=size_bits,
        vector_registers_256b=-(-size_bits // VECTOR_BITS),
        fits_l1=size_bits // 8 <= L1_BYTES,
    )
