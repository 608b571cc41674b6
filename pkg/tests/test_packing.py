import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from lutgemm.packing import (
    PackedMatrix,
    PackScheme,
    Role,
    gather_index_lut65k,
    gather_indices_lut16,
    load_packed,
    pack,
    pack_weight_matrix,
    reorder_weights_offline,
    rotl8,
    rotr8,
    save_packed,
    unpack,
    values_per_byte,
)
from lutgemm.quant import CodeTensor


def codes(shape, bits, rng, signed=False):
    return CodeTensor(rng.integers(0, 1 << bits, shape), bits, signed)


@st.composite
def code_tensors(draw, bits=None):
    bits = draw(st.sampled_from([2, 3, 4])) if bits is None else bits
    shape = draw(st.tuples(st.integers(1, 6), st.integers(1, 21)))
    arr = draw(hnp.arrays(np.uint8, shape, elements=st.integers(0, (1 << bits) - 1)))
    return CodeTensor(arr, bits, draw(st.booleans()))


class TestLayout:
    def test_natural_byte_order(self):
        c = CodeTensor(np.array([[0, 1, 2, 3]]), 2)
        assert pack(c, "A").data.tolist() == [[0xE4]]

    def test_rotated_weight_byte(self):
        c = CodeTensor(np.array([[1, 2, 3, 0]]), 2)
        assert pack(c, "A", Role.WEIGHT).data.tolist() == [[0x39]]
        assert pack(c, "C", Role.WEIGHT).data.tolist() == [[0xE4]]
        assert pack(c, "D", Role.WEIGHT).rotated

    def test_activations_never_rotated(self):
        c = CodeTensor(np.array([[1, 2, 3, 0]]), 2)
        assert pack(c, "D", Role.ACTIVATION).data.tolist() == [[0x39]]

    def test_4bit_nibbles(self):
        c = CodeTensor(np.array([[0x3, 0xA]]), 4)
        assert pack(c, "A").data.tolist() == [[0xA3]]

    def test_3bit_loose_container(self):
        c = CodeTensor(np.array([[5, 7, 0]]), 3)
        m = pack(c, "A")
        assert m.row_bytes == 3 and m.data.tolist() == [[5, 7, 0]]

    def test_padding_uses_pad_code(self):
        c = CodeTensor(np.array([[3, 3, 3, 3, 1]]), 2)
        assert pack(c, "A", pad_code=2).data.tolist() == [[0xFF, 0xA9]]
        assert pack(c, "A").pad_code == -1

    @pytest.mark.parametrize("bits,vpb", [(2, 4), (3, 1), (4, 2)])
    def test_values_per_byte(self, bits, vpb):
        assert values_per_byte(bits) == vpb

    def test_rejects_bad_pad(self):
        with pytest.raises(ValueError):
            pack(CodeTensor(np.zeros((1, 3)), 2), "A", pad_code=4)

    def test_rotations_inverse(self):
        b = np.arange(256, dtype=np.uint8)
        assert np.array_equal(rotr8(rotl8(b, 2), 2), b)
        assert rotl8(0x39, 2) == 0xE4

    def test_scheme_parse(self):
        assert PackScheme.parse("d") is PackScheme.D
        assert PackScheme.parse(1) is PackScheme.B
        with pytest.raises(ValueError):
            PackScheme.parse("E")


class TestRoundTrip:
    @settings(max_examples=150, deadline=None)
    @given(c=code_tensors(), scheme=st.sampled_from(list(PackScheme)),
           role=st.sampled_from(list(Role)))
    def test_unpack_inverts_pack(self, c, scheme, role):
        assert unpack(pack(c, scheme, role), c.signed) == c

    @settings(max_examples=60, deadline=None)
    @given(c=code_tensors(), scheme=st.sampled_from(list(PackScheme)))
    def test_serialization(self, c, scheme, tmp_path_factory):
        m = pack_weight_matrix(c, scheme, pad_code=0)
        assert PackedMatrix.from_bytes(m.to_bytes()) == m
        path = tmp_path_factory.mktemp("pk") / "w.bin"
        m2 = pack(c, scheme)
        save_packed(m2, path)
        assert load_packed(path) == m2

    def test_truncated_blob(self):
        m = pack(CodeTensor(np.zeros((2, 8)), 2), "A")
        with pytest.raises(ValueError):
            PackedMatrix.from_bytes(m.to_bytes()[:-1])
        with pytest.raises(ValueError):
            PackedMatrix.from_bytes(b"\x00" * 5)

    def test_weight_matrix_is_column_major(self, rng):
        w = codes((5, 3), 2, rng)
        m = pack_weight_matrix(w, "A")
        assert (m.rows, m.cols) == (3, 5)
        assert np.array_equal(unpack(m).codes, w.codes.T)


class TestReorder:
    def test_matches_scheme_c_packing(self, rng):
        w = codes((7, 9), 2, rng)
        natural = pack_weight_matrix(w, "A")
        assert reorder_weights_offline(natural) == pack_weight_matrix(w, "C")

    def test_rejects(self, rng):
        w = codes((4, 4), 2, rng)
        with pytest.raises(ValueError):
            reorder_weights_offline(pack(w, "A", Role.ACTIVATION))
        with pytest.raises(ValueError):
            reorder_weights_offline(pack_weight_matrix(w, "C"))
        with pytest.raises(ValueError):
            reorder_weights_offline(pack_weight_matrix(codes((4, 4), 4, rng), "A"))


def natural_indices(w_nat, a):
    """Oracle: per-lane index (w_j << 2) | a_j from natural-layout bytes."""
    return [(((w_nat >> 2 * j) & 3) << 2) | ((a >> 2 * j) & 3) for j in range(4)]


class TestIndexExtraction:
    def test_scalar_example(self):
        # weights (1,2,3,0), activations (0,1,2,3)
        assert gather_indices_lut16(0x39, 0xE4, "A") == [4, 9, 14, 3]
        assert gather_indices_lut16(0xE4, 0xE4, "C") == [4, 9, 14, 3]

    @pytest.mark.parametrize("scheme", list(PackScheme))
    def test_exhaustive_against_oracle(self, scheme):
        w_nat, a = np.meshgrid(np.arange(256), np.arange(256), indexing="ij")
        w_stored = rotl8(w_nat, 2) if scheme.rotated else w_nat
        got = gather_indices_lut16(w_stored, a, scheme)
        want = np.stack(natural_indices(w_nat, a), axis=-1)
        assert np.array_equal(got, want)

    def test_lut65k_index(self):
        assert gather_index_lut65k(0x12, 0x34) == 0x1234
        idx = gather_index_lut65k(np.arange(256)[:, None], np.arange(256)[None, :])
        assert len(np.unique(idx)) == 1 << 16
