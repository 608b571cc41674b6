from fractions import Fraction

import pytest

from lutgemm.costmodel import unpack_cost, values_per_register
from lutgemm.packing import PackScheme


def test_reordering_saves_shifts():
    assert unpack_cost("C").shift_ops < unpack_cost("A").shift_ops


def test_pairing_saves_ors():
    assert unpack_cost("D").or_ops < unpack_cost("C").or_ops
    assert unpack_cost("B").or_ops < unpack_cost("A").or_ops


def test_d_is_cheapest():
    totals = {s: unpack_cost(s).total for s in PackScheme}
    assert min(totals, key=totals.get) is PackScheme.D


def test_exact_fractions():
    assert unpack_cost(PackScheme.A).total == Fraction(11, 2)
    assert unpack_cost("b").as_dict() == {"and": 2.0, "shift": 1.0, "or": 0.5, "shuffle": 1.0, "total": 4.5}


def test_values_per_register():
    assert values_per_register(256, 2) == 128
    assert values_per_register(128, 4) == 32
    with pytest.raises(ValueError):
        values_per_register(256, 3)
