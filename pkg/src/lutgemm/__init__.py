"""Lookup-table GEMM for 2-4 bit quantized operands."""

from .costmodel import UnpackCost, unpack_cost, values_per_register
from .kernels import (
    GemmProblem,
    cpu_has_avx2,
    gemm_lut16,
    gemm_lut65k,
    gemm_ref_f32,
    gemm_ref_i8,
    gemm_reference_quant,
    gemm_reference_real,
    select_kernel_path,
)
from .lut import EntryDomain, LookupTable, LUTOverflowError, build_lut16, build_lut65k, build_lut_general, lut_storage
from .packing import (
    PackedMatrix,
    PackScheme,
    Role,
    gather_index_lut65k,
    gather_indices_lut16,
    pack,
    pack_weight_matrix,
    reorder_weights_offline,
    unpack,
)
from .quant import Codebook, CodeTensor, QuantParams, dequantize_uniform, quantize_uniform, zero_code

__version__ = "0.1.0"

__all__ = [
    "Codebook", "CodeTensor", "EntryDomain", "GemmProblem", "LUTOverflowError", "LookupTable",
    "PackScheme", "PackedMatrix", "QuantParams", "Role", "UnpackCost", "build_lut16",
    "build_lut65k", "build_lut_general", "cpu_has_avx2", "dequantize_uniform",
    "gather_index_lut65k", "gather_indices_lut16", "gemm_lut16", "gemm_lut65k", "gemm_ref_f32",
    "gemm_ref_i8", "gemm_reference_quant", "gemm_reference_real", "lut_storage", "pack",
    "pack_weight_matrix", "quantize_uniform", "reorder_weights_offline", "select_kernel_path",
    "unpack", "unpack_cost", "values_per_register", "zero_code",
]
