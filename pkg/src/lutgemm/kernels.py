"""GEMM engines: brute-force oracles, LUT-16 and LUT-65k kernels, baselines.

All kernels compute ``C[m, k] = sum_n A[m, n] * B[n, k]``. The weight
operand ``B`` is passed packed column-major (see ``pack_weight_matrix``).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _native
from .lut import EntryDomain, LookupTable
from .packing import PackedMatrix, PackScheme, Role
from .quant import CodeTensor, ValueMap, is_integer_valued, value_table

FORCE_SCALAR_ENV = "LUTGEMM_FORCE_SCALAR"

_DTYPE_CODE = {EntryDomain.INT8: 0, EntryDomain.INT32: 1, EntryDomain.REAL: 2}


@dataclass(frozen=True)
class GemmProblem:
    M: int
    N: int
    K: int

    def __post_init__(self):
        for name in ("M", "N", "K"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")

    @property
    def macs(self) -> int:
        return self.M * self.N * self.K


def cpu_has_avx2() -> bool:
    return bool(_native.cpu_has_avx2())


def select_kernel_path(force_scalar: bool | None = None) -> str:
    """``"vector"`` when the 256-bit byte-shuffle kernels can run, else ``"scalar"``.

    ``force_scalar=None`` defers to the ``LUTGEMM_FORCE_SCALAR`` environment
    variable.
    """
    if force_scalar is None:
        force_scalar = os.environ.get(FORCE_SCALAR_ENV, "").strip().lower() in ("1", "true", "yes", "on")
    if force_scalar:
        return "scalar"
    return "vector" if cpu_has_avx2() else "scalar"


def _resolve_path(path: str | None) -> str:
    if path is None:
        return select_kernel_path()
    if path not in ("vector", "scalar"):
        raise ValueError(f"path must be 'vector' or 'scalar', got {path!r}")
    if path == "vector" and not cpu_has_avx2():
        raise RuntimeError("vector path requested but this CPU lacks AVX2")
    return path


def _row_chunks(M: int, workers: int):
    workers = max(1, min(int(workers), M))
    bounds = [M * i // workers for i in range(workers + 1)]
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _run_rows(fn, M: int, workers: int) -> None:
    chunks = _row_chunks(M, workers)
    if len(chunks) == 1:
        fn(*chunks[0])
        return
    with ThreadPoolExecutor(len(chunks)) as pool:
        for f in [pool.submit(fn, a, b) for a, b in chunks]:
            f.result()


# --------------------------------------------------------------------------
# Oracles

def _check_inner(a_shape, b_shape):
    if len(a_shape) != 2 or len(b_shape) != 2 or a_shape[1] != b_shape[0]:
        raise ValueError(f"shape mismatch: {a_shape} x {b_shape}")


def gemm_reference_real(A, B) -> np.ndarray:
    """Float64 GEMM accumulating in ascending ``n`` order."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    _check_inner(A.shape, B.shape)
    out = np.zeros((A.shape[0], B.shape[1]), dtype=np.float64)
    for n in range(A.shape[1]):
        out += A[:, n, None] * B[None, n, :]
    return out


def gemm_reference_quant(codes_a: CodeTensor, codes_w: CodeTensor, a_values: ValueMap,
                         w_values: ValueMap, mode: str = "int") -> np.ndarray:
    """Decode both operands through their value maps and multiply, n ascending.

    ``codes_a`` is M x N, ``codes_w`` is N x K (logical orientation).
    """
    _check_inner(codes_a.shape, codes_w.shape)
    av = value_table(a_values)[codes_a.codes]
    wv = value_table(w_values)[codes_w.codes]
    if mode == "real":
        return gemm_reference_real(av, wv)
    if mode != "int":
        raise ValueError(f"mode must be 'int' or 'real', got {mode!r}")
    if not (is_integer_valued(a_values) and is_integer_valued(w_values)):
        raise ValueError("int mode requires integer-valued value maps")
    av = av.astype(np.int64)
    wv = wv.astype(np.int64)
    out = np.zeros((av.shape[0], wv.shape[1]), dtype=np.int64)
    for n in range(av.shape[1]):
        out += av[:, n, None] * wv[None, n, :]
    info = np.iinfo(np.int32)
    if out.size and (out.min() < info.min or out.max() > info.max):
        raise OverflowError("exact result exceeds the int32 accumulator range")
    return out.astype(np.int32)


def horizontal_reduce(partials) -> int:
    """Exact lane sum by repeated halving: upper half added onto lower half.

    The lane count is zero-padded to a power of two.
    """
    lanes = [int(v) for v in np.asarray(partials).ravel()]
    if not lanes:
        return 0
    width = 1
    while width < len(lanes):
        width *= 2
    lanes += [0] * (width - len(lanes))
    while width > 1:
        width //= 2
        lanes = [lanes[i] + lanes[i + width] for i in range(width)]
    return lanes[0]


def safe_int8_accumulations(max_abs_entry: float) -> int:
    """How many table entries can be summed in an 8-bit lane without overflow."""
    if max_abs_entry <= 0:
        return 1 << 30
    return int(127 // max_abs_entry)


# --------------------------------------------------------------------------
# LUT kernels

def _check_operands(packed_a: PackedMatrix, packed_w: PackedMatrix, problem: GemmProblem | None):
    if packed_a.role is not Role.ACTIVATION:
        raise ValueError("first operand must be a packed activation matrix")
    if packed_w.role is not Role.WEIGHT:
        raise ValueError("second operand must be a packed weight matrix")
    if packed_a.bits != packed_w.bits:
        raise ValueError(f"operand bitwidths differ: {packed_a.bits} vs {packed_w.bits}")
    if packed_a.cols != packed_w.cols:
        raise ValueError(f"reduction dims differ: {packed_a.cols} vs {packed_w.cols}")
    shape = GemmProblem(packed_a.rows, packed_a.cols, packed_w.rows)
    if problem is not None and problem != shape:
        raise ValueError(f"problem {problem} does not match operands {shape}")
    return shape


def _data(m: PackedMatrix) -> np.ndarray:
    return np.ascontiguousarray(m.data, dtype=np.uint8)


def accumulation_cadence(max_abs_entry: float) -> tuple[int, int]:
    """(chunks kept in 8-bit lanes, 8->16-bit widenings per 16->32-bit flush).

    Each chunk adds four lookups to an 8-bit lane; a chunk count of 0 means
    every lookup is widened on its own.
    """
    safe = safe_int8_accumulations(max_abs_entry)
    group = min(31, safe // 4)
    per_widen = 2 * 4 * max(group, 1) * max_abs_entry
    flush = int(32767 // per_widen) if per_widen else 1 << 30
    flush = max(1, min(flush, 1 << 30))
    assert 4 * group * max_abs_entry <= 127
    assert per_widen * flush <= 32767 or per_widen == 0
    return group, flush


def _lut16_int8_params(lut: LookupTable):
    return accumulation_cadence(lut.max_abs_entry())


def gemm_lut16(packed_a: PackedMatrix, packed_w: PackedMatrix, lut: LookupTable,
               problem: GemmProblem | None = None, scheme=None, *, path: str | None = None,
               workers: int = 1) -> np.ndarray:
    """Per-pair table GEMM. Int8 2-bit tables use the shuffle kernels on the
    vector path; other domains and bitwidths run the scalar kernel."""
    shape = _check_operands(packed_a, packed_w, problem)
    if scheme is not None and PackScheme.parse(scheme) is not packed_w.scheme:
        raise ValueError(
            f"kernel variant {PackScheme.parse(scheme).name} does not match weight layout "
            f"{packed_w.scheme.name}"
        )
    bits = packed_w.bits
    if lut.arity != 1 or lut.index_bits != 2 * bits:
        raise ValueError(f"need an arity-1 table with {2 * bits} index bits, got "
                         f"arity {lut.arity} / {lut.index_bits} bits")
    return _lut16_run(packed_a, packed_w, lut, shape, _resolve_path(path), 2, workers)


def _lut16_run(packed_a, packed_w, lut, shape, path, stage, workers=1):
    M, N, K = shape.M, shape.N, shape.K
    A, W = _data(packed_a), _data(packed_w)
    lda, ldw = packed_a.row_bytes, packed_w.row_bytes
    domain = lut.entry_domain
    real = domain is EntryDomain.REAL
    out = np.zeros((M, K), dtype=np.float64 if real else np.int32)
    entries = np.ascontiguousarray(lut.entries)

    if domain is EntryDomain.INT8 and packed_w.bits == 2:
        group, flush = _lut16_int8_params(lut)
        vector = int(path == "vector")

        def run(m0, m1):
            _native.lut16_staged(A, lda, W, ldw, entries, out, m0, m1, K, N,
                                 int(packed_w.scheme), stage, vector, group, flush)
    else:
        if stage != 2:
            raise ValueError("stage profiling needs a 2-bit int8 table")
        rotated = int(packed_w.rotated)

        def run(m0, m1):
            _native.lut_scalar(A, lda, W, ldw, entries, out, m0, m1, K, N,
                               packed_w.bits, rotated, _DTYPE_CODE[domain])

    _run_rows(run, M, workers)
    return out


def lut16_stage_pass(packed_a: PackedMatrix, packed_w: PackedMatrix, lut: LookupTable,
                     stage: int, path: str | None = None) -> np.ndarray:
    """Instrumented LUT-16 run truncated after a pipeline stage.

    stage 0 extracts indices only, stage 1 also performs the lookups, stage 2
    is the full kernel. Outputs of stages 0 and 1 are meaningless; these runs
    exist for timing and are not production kernels.
    """
    if stage not in (0, 1, 2):
        raise ValueError(f"stage must be 0, 1 or 2, got {stage}")
    shape = _check_operands(packed_a, packed_w, None)
    if lut.entry_domain is not EntryDomain.INT8 or packed_w.bits != 2:
        raise ValueError("stage profiling needs 2-bit operands and an int8 table")
    return _lut16_run(packed_a, packed_w, lut, shape, _resolve_path(path), stage)


def _operand_pad_is_zero(m: PackedMatrix, vmap: ValueMap) -> bool:
    return m.pad_code >= 0 and value_table(vmap)[m.pad_code] == 0.0


def gemm_lut65k(packed_a: PackedMatrix, packed_w: PackedMatrix, lut: LookupTable,
                problem: GemmProblem | None = None, *, allow_remainder: bool = True,
                workers: int = 1) -> np.ndarray:
    """Group table GEMM: one lookup per byte pair (four code pairs).

    When ``N % 4 != 0`` the final byte is looked up directly if either
    operand's padding decodes to zero; otherwise the trailing pairs go through
    the per-pair product table.
    """
    shape = _check_operands(packed_a, packed_w, problem)
    if packed_w.bits != 2 or lut.arity != 4 or lut.index_bits != 16:
        raise ValueError("LUT-65k needs 2-bit operands and an arity-4 table")
    if packed_w.rotated:
        raise ValueError("LUT-65k decodes the natural layout; un-rotate scheme C/D weights first")
    M, N, K = shape.M, shape.N, shape.K
    pad_ok = N % 4 == 0 or _operand_pad_is_zero(packed_a, lut.a_values) \
        or _operand_pad_is_zero(packed_w, lut.w_values)
    if not pad_ok and not allow_remainder:
        raise ValueError(f"N={N} leaves a partial byte, no zero-valued pad code exists "
                         "and the remainder path is disabled")
    domain = lut.entry_domain
    real = domain is EntryDomain.REAL
    entries = np.ascontiguousarray(lut.entries)
    pair = np.ascontiguousarray(lut.pair_products()) if not pad_ok else np.zeros(16, entries.dtype)
    A, W = _data(packed_a), _data(packed_w)
    out = np.zeros((M, K), dtype=np.float64 if real else np.int32)

    def run(m0, m1):
        _native.lut65k(A, packed_a.row_bytes, W, packed_w.row_bytes, entries, pair, out,
                       m0, m1, K, N, int(pad_ok), _DTYPE_CODE[domain])

    _run_rows(run, M, workers)
    return out


# --------------------------------------------------------------------------
# Baselines for benchmarking

def gemm_ref_i8(a: np.ndarray, w_t: np.ndarray, *, path: str | None = None) -> np.ndarray:
    """Widening int8 GEMM; ``a`` is M x N, ``w_t`` is K x N (column-major weights)."""
    a = np.ascontiguousarray(a, dtype=np.int8)
    w_t = np.ascontiguousarray(w_t, dtype=np.int8)
    if a.ndim != 2 or w_t.ndim != 2 or a.shape[1] != w_t.shape[1]:
        raise ValueError(f"shape mismatch: {a.shape} x {w_t.shape}^T")
    M, N = a.shape
    K = w_t.shape[0]
    out = np.zeros((M, K), dtype=np.int32)
    _native.gemm_i8(a, w_t, out, 0, M, K, N, int(_resolve_path(path) == "vector"))
    return out


def gemm_ref_f32(a: np.ndarray, w_t: np.ndarray) -> np.ndarray:
    """Scalar FP32 GEMM; ``a`` is M x N, ``w_t`` is K x N."""
    a = np.ascontiguousarray(a, dtype=np.float32)
    w_t = np.ascontiguousarray(w_t, dtype=np.float32)
    if a.ndim != 2 or w_t.ndim != 2 or a.shape[1] != w_t.shape[1]:
        raise ValueError(f"shape mismatch: {a.shape} x {w_t.shape}^T")
    M, N = a.shape
    K = w_t.shape[0]
    out = np.zeros((M, K), dtype=np.float32)
    _native.gemm_f32(a, w_t, out, 0, M, K, N)
    return out


def lut65k_stage_pass(packed_a: PackedMatrix, packed_w: PackedMatrix, lut: LookupTable,
                      stage: int) -> np.ndarray:
    """Instrumented LUT-65k run truncated after a pipeline stage (timing only).

    Partial bytes are looked up whole, so even the stage-2 output is exact
    only when both operands are padded with zero-valued codes.
    """
    if stage not in (0, 1, 2):
        raise ValueError(f"stage must be 0, 1 or 2, got {stage}")
    shape = _check_operands(packed_a, packed_w, None)
    if lut.entry_domain is not EntryDomain.INT8 or lut.arity != 4:
        raise ValueError("stage profiling needs an int8 arity-4 table")
    out = np.zeros((shape.M, shape.K), dtype=np.int32)
    _native.lut65k_staged(_data(packed_a), packed_a.row_bytes, _data(packed_w), packed_w.row_bytes,
                          np.ascontiguousarray(lut.entries), out, 0, shape.M, shape.K, shape.N, stage)
    return out
