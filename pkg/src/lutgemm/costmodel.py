"""Static instruction-count model of the unpacking schemes."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .packing import PackScheme


@dataclass(frozen=True)
class UnpackCost:
    """Average instructions spent per LUT output (one weight-activation pair)."""

    and_ops: Fraction
    shift_ops: Fraction
    or_ops: Fraction
    shuffle_ops: Fraction

    @property
    def total(self) -> Fraction:
        return self.and_ops + self.shift_ops + self.or_ops + self.shuffle_ops

    def as_dict(self) -> dict[str, float]:
        return {
            "and": float(self.and_ops),
            "shift": float(self.shift_ops),
            "or": float(self.or_ops),
            "shuffle": float(self.shuffle_ops),
            "total": float(self.total),
        }


def _cost(and_ops, shift_ops, or_ops, shuffle_ops) -> UnpackCost:
    return UnpackCost(*(Fraction(v) for v in (and_ops, shift_ops, or_ops, shuffle_ops)))


_COSTS = {
    PackScheme.A: _cost(2, "3/2", 1, 1),
    PackScheme.B: _cost(2, 1, "1/2", 1),
    PackScheme.C: _cost(2, "1/2", 1, 1),
    PackScheme.D: _cost(2, "1/2", "1/2", 1),
}


def unpack_cost(scheme) -> UnpackCost:
    return _COSTS[PackScheme.parse(scheme)]


def values_per_register(register_bits: int, value_bits: int) -> int:
    if register_bits <= 0 or value_bits <= 0 or register_bits % value_bits:
        raise ValueError(f"{value_bits}-bit values do not tile a {register_bits}-bit register")
    return register_bits // value_bits
