import numpy as np
import pytest

from conftest import SIGNED2, VALUE_MAP_FIXTURES
from lutgemm.lut import (
    EntryDomain,
    LUTOverflowError,
    build_lut16,
    build_lut65k,
    build_lut_general,
    lut_storage,
)
from lutgemm.quant import Codebook, QuantParams, code_value


def test_signed_lut16_corners():
    lut = build_lut16(SIGNED2, SIGNED2)
    # index (w_pattern << 2) | a_pattern; pattern 0 is -2, pattern 3 is +1
    assert lut.entries[0] == 4
    assert lut.entries[0b0011] == -2
    assert lut.entries[0b1111] == 1
    assert lut.entries.dtype == np.int8 and lut.entries.size == 16


def test_entry_formula_via_code_value():
    lut = build_lut16(SIGNED2, SIGNED2)
    for qw in range(-2, 2):
        for qa in range(-2, 2):
            idx = ((qw + 2) << 2) | (qa + 2)
            assert lut.entries[idx] == code_value(qw, SIGNED2) * code_value(qa, SIGNED2)


def test_int_domain_rejects_fractional_products():
    with pytest.raises(ValueError):
        build_lut16(VALUE_MAP_FIXTURES["real_codebook"], SIGNED2, "int8")


def test_overflow_detected():
    big = Codebook([-16, -8, 8, 16])
    with pytest.raises(LUTOverflowError):
        build_lut16(big, big, "int8")
    assert build_lut16(big, big, "int32").entries.max() == 256


def test_signed_4bit_fits_int8():
    p = QuantParams(1.0, 0.0, 4, True)
    lut = build_lut_general(4, p, p)
    assert lut.entries.size == 256 and lut.max_abs_entry() == 64


def test_bit_mismatch_rejected():
    with pytest.raises(ValueError):
        build_lut_general(3, SIGNED2, SIGNED2)


def test_real_domain():
    cb = VALUE_MAP_FIXTURES["real_codebook"]
    lut = build_lut16(cb, cb, "real")
    assert lut.entry_domain is EntryDomain.REAL
    assert lut.entries[0] == 0.75 * 0.75


def test_lut65k_examples():
    lut = build_lut65k(SIGNED2, SIGNED2)
    assert lut.entries.size == 1 << 16 and lut.arity == 4
    # all-zero bytes are four (-2)*(-2) products
    assert lut.entries[0] == 16
    # 0xAA is four zero-valued codes
    assert lut.entries[(0xAA << 8) | 0x00] == 0


def test_lut65k_matches_pairwise_sum(rng):
    lut65 = build_lut65k(SIGNED2, SIGNED2)
    pair = build_lut16(SIGNED2, SIGNED2).entries.astype(int)
    for idx in rng.integers(0, 1 << 16, 500):
        w, a = idx >> 8, idx & 0xFF
        want = sum(pair[(((w >> 2 * j) & 3) << 2) | ((a >> 2 * j) & 3)] for j in range(4))
        assert lut65.entries[idx] == want


@pytest.mark.parametrize("bits,entries,size,regs", [(2, 16, 128, 1), (3, 64, 512, 2), (4, 256, 2048, 8)])
def test_storage(bits, entries, size, regs):
    s = lut_storage(bits)
    assert (s.index_bits, s.entries, s.size_bits, s.vector_registers_256b, s.fits_l1) == \
        (2 * bits, entries, size, regs, True)
