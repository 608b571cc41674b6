"""Random GEMM instances shared by the kernel and acceptance tests."""

from dataclasses import dataclass

import numpy as np

from lutgemm import kernels
from lutgemm.lut import build_lut65k, build_lut_general
from lutgemm.packing import PackScheme, Role, pack, pack_weight_matrix
from lutgemm.quant import CodeTensor, QuantParams, ValueMap, zero_code


@dataclass
class Instance:
    codes_a: CodeTensor
    codes_w: CodeTensor
    a_values: ValueMap
    w_values: ValueMap

    @property
    def bits(self):
        return self.codes_a.bits

    def oracle(self, mode="int"):
        return kernels.gemm_reference_quant(self.codes_a, self.codes_w, self.a_values,
                                            self.w_values, mode)

    def packed(self, scheme, pad=True):
        pa = zero_code(self.a_values) if pad else None
        pw = zero_code(self.w_values) if pad else None
        return (pack(self.codes_a, scheme, Role.ACTIVATION, pa),
                pack_weight_matrix(self.codes_w, scheme, pw))

    def lut16(self, scheme, domain="int8", path=None, pad=True, workers=1):
        lut = build_lut_general(self.bits, self.w_values, self.a_values, domain)
        a, w = self.packed(scheme, pad)
        return kernels.gemm_lut16(a, w, lut, path=path, workers=workers)

    def lut65k(self, domain="int8", pad=True, workers=1, allow_remainder=True):
        lut = build_lut65k(self.w_values, self.a_values, domain)
        a, w = self.packed(PackScheme.A, pad)
        return kernels.gemm_lut65k(a, w, lut, allow_remainder=allow_remainder, workers=workers)


def random_instance(rng, M, N, K, bits=2, signed=True, a_values=None, w_values=None):
    if a_values is None:
        a_values = QuantParams(1.0, 0.0, bits, signed)
    if w_values is None:
        w_values = QuantParams(1.0, 0.0, bits, signed)
    hi = 1 << bits
    return Instance(
        CodeTensor(rng.integers(0, hi, (M, N)), bits, signed),
        CodeTensor(rng.integers(0, hi, (N, K)), bits, signed),
        a_values,
        w_values,
    )
