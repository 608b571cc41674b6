"""Sub-byte packing layouts, offline weight reordering and LUT index extraction.

Natural layout: logical value ``j`` of each group occupies bits
``[j*bits, (j+1)*bits)`` of its byte, bit 0 being the least significant.
Schemes C and D store weights with every natural byte rotated left by two
bits, which lines each weight field up two bits above its activation field.
3-bit codes use a loose container, one code per byte.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from .quant import CodeTensor


class PackScheme(enum.IntEnum):
    A = 0
    B = 1
    C = 2
    D = 3

    @property
    def rotated(self) -> bool:
        """Weights are stored in the rotated layout."""
        return self in (PackScheme.C, PackScheme.D)

    @property
    def paired(self) -> bool:
        """Unpacking extracts two lane pairs per mask pass."""
        return self in (PackScheme.B, PackScheme.D)

    @classmethod
    def parse(cls, value) -> "PackScheme":
        if isinstance(value, PackScheme):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                pass
        elif isinstance(value, int) and 0 <= value <= 3:
            return cls(value)
        raise ValueError(f"unknown packing scheme {value!r}")


class Role(enum.IntEnum):
    WEIGHT = 0
    ACTIVATION = 1


CACHE_LINE = 64


def aligned_zeros(shape, dtype=np.uint8, align: int = CACHE_LINE) -> np.ndarray:
    """Zero-filled C-contiguous array whose first byte sits on an ``align`` boundary."""
    dtype = np.dtype(dtype)
    nbytes = int(np.prod(shape)) * dtype.itemsize
    raw = np.zeros(nbytes + align, dtype=np.uint8)
    start = (-raw.ctypes.data) % align
    return raw[start:start + nbytes].view(dtype).reshape(shape)


def values_per_byte(bits: int) -> int:
    if bits == 2:
        return 4
    if bits == 4:
        return 2
    if bits == 3:
        return 1
    raise ValueError(f"unsupported bitwidth {bits}")


def rotl8(x, r: int):
    x = np.asarray(x, dtype=np.uint8)
    r %= 8
    return ((x << r) | (x >> (8 - r))).astype(np.uint8) if r else x.copy()


def rotr8(x, r: int):
    return rotl8(x, 8 - (r % 8))


@dataclass(frozen=True, eq=False)
class PackedMatrix:
    """Row-major packed codes; ``data`` has shape ``(rows, row_bytes)``.

    For the weight operand of a GEMM the rows are the output columns, i.e.
    the matrix is stored column-major so a row holds one column's codes
    along the reduction dimension. ``pad_code`` is -1 when no neutral pad
    code was supplied (padding bits are then zero and must be skipped).
    """

    role: Role
    scheme: PackScheme
    bits: int
    rows: int
    cols: int
    data: np.ndarray
    pad_code: int = -1

    @property
    def values_per_byte(self) -> int:
        return values_per_byte(self.bits)

    @property
    def row_bytes(self) -> int:
        return -(-self.cols // self.values_per_byte)

    @property
    def rotated(self) -> bool:
        return self.role is Role.WEIGHT and self.scheme.rotated and self.bits == 2

    def to_bytes(self) -> bytes:
        header = struct.pack(
            "<6i", int(self.role), int(self.scheme), self.bits, self.rows, self.cols, self.pad_code
        )
        return header + np.ascontiguousarray(self.data, dtype=np.uint8).tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PackedMatrix":
        if len(blob) < 24:
            raise ValueError("truncated packed-matrix header")
        role, scheme, bits, rows, cols, pad = struct.unpack_from("<6i", blob)
        vpb = values_per_byte(bits)
        row_bytes = -(-cols // vpb)
        payload = np.frombuffer(blob, dtype=np.uint8, offset=24)
        if rows < 0 or cols < 0 or payload.size != rows * row_bytes:
            raise ValueError(
                f"payload of {payload.size} bytes does not match {rows}x{cols} {bits}-bit matrix"
            )
        return cls(Role(role), PackScheme(scheme), bits, rows, cols,
                   payload.reshape(rows, row_bytes).copy(), pad)

    def __eq__(self, other):
        if not isinstance(other, PackedMatrix):
            return NotImplemented
        return (
            (self.role, self.scheme, self.bits, self.rows, self.cols, self.pad_code)
            == (other.role, other.scheme, other.bits, other.rows, other.cols, other.pad_code)
            and np.array_equal(self.data, other.data)
        )


def save_packed(m: PackedMatrix, path) -> None:
    with open(path, "wb") as fh:
        fh.write(m.to_bytes())


def load_packed(path) -> PackedMatrix:
    with open(path, "rb") as fh:
        return PackedMatrix.from_bytes(fh.read())


def pack(c: CodeTensor, scheme, role=Role.ACTIVATION, pad_code: int | None = None) -> PackedMatrix:
    scheme = PackScheme.parse(scheme)
    role = Role(role)
    codes = np.asarray(c.codes)
    if codes.ndim != 2:
        raise ValueError(f"pack expects a 2-D code tensor, got shape {codes.shape}")
    bits = c.bits
    vpb = values_per_byte(bits)
    limit = (1 << bits) - 1
    if codes.size and int(codes.max()) > limit:
        raise ValueError(f"code {int(codes.max())} exceeds {bits}-bit range")
    if pad_code is not None and not 0 <= pad_code <= limit:
        raise ValueError(f"pad code {pad_code} exceeds {bits}-bit range")

    rows, cols = codes.shape
    row_bytes = -(-cols // vpb)
    padded = np.full((rows, row_bytes * vpb), 0 if pad_code is None else pad_code, dtype=np.uint8)
    padded[:, :cols] = codes
    groups = padded.reshape(rows, row_bytes, vpb)
    data = aligned_zeros((rows, row_bytes))
    for j in range(vpb):
        data |= (groups[:, :, j] << (j * bits)).astype(np.uint8)

    m = PackedMatrix(role, scheme, bits, rows, cols, data, -1 if pad_code is None else pad_code)
    if m.rotated:
        data[...] = rotl8(data, 2)
    return m


def pack_weight_matrix(w: CodeTensor, scheme, pad_code: int | None = None) -> PackedMatrix:
    """Pack an ``N x K`` weight code matrix column-major (one row per output column)."""
    return pack(w.T, scheme, Role.WEIGHT, pad_code)


def unpack(m: PackedMatrix, signed: bool = False) -> CodeTensor:
    data = np.asarray(m.data, dtype=np.uint8)
    if data.shape != (m.rows, m.row_bytes):
        raise ValueError(f"data shape {data.shape} does not match {m.rows}x{m.row_bytes}")
    if m.rotated:
        data = rotr8(data, 2)
    vpb = m.values_per_byte
    mask = (1 << m.bits) - 1
    out = np.empty((m.rows, m.row_bytes, vpb), dtype=np.uint8)
    for j in range(vpb):
        out[:, :, j] = (data >> (j * m.bits)) & mask
    return CodeTensor(out.reshape(m.rows, -1)[:, : m.cols], m.bits, signed)


def reorder_weights_offline(m: PackedMatrix) -> PackedMatrix:
    """Natural-layout weights to the rotated layout used by schemes C and D."""
    if m.role is not Role.WEIGHT:
        raise ValueError("only weight matrices are reordered")
    if m.bits != 2:
        raise ValueError("weight reordering is defined for 2-bit codes only")
    if m.scheme.rotated:
        raise ValueError(f"matrix is already in the rotated layout (scheme {m.scheme.name})")
    return PackedMatrix(m.role, PackScheme.C, m.bits, m.rows, m.cols, rotl8(m.data, 2), m.pad_code)


# Index extraction. Each variant mirrors the mask/shift sequence of the
# matching vector kernel on 8-bit lanes; every variant yields (w_j << 2) | a_j.

def _idx_a(w, a):
    return [
        ((w << 2) & 0x0C) | (a & 0x03),
        (w & 0x0C) | ((a >> 2) & 0x03),
        ((w >> 2) & 0x0C) | ((a >> 4) & 0x03),
        ((w >> 4) & 0x0C) | ((a >> 6) & 0x03),
    ]


def _idx_b(w, a):
    even = ((w << 2) & 0xCC) | (a & 0x33)
    odd = (w & 0xCC) | ((a >> 2) & 0x33)
    return [even & 0x0F, odd & 0x0F, (even >> 4) & 0x0F, (odd >> 4) & 0x0F]


def _idx_c(w, a):
    return [
        (w & 0x0C) | (a & 0x03),
        ((w & 0x30) | (a & 0x0C)) >> 2,
        ((w & 0xC0) | (a & 0x30)) >> 4,
        ((w << 2) & 0x0C) | ((a >> 6) & 0x03),
    ]


def _idx_d(w, a):
    even = (w & 0xCC) | (a & 0x33)
    return [
        even & 0x0F,
        ((w & 0x30) | (a & 0x0C)) >> 2,
        (even >> 4) & 0x0F,
        ((w << 2) & 0x0C) | ((a >> 6) & 0x03),
    ]


_EXTRACTORS = {PackScheme.A: _idx_a, PackScheme.B: _idx_b, PackScheme.C: _idx_c, PackScheme.D: _idx_d}


def gather_indices_lut16(w_byte, a_byte, scheme):
    """Four LUT-16 indices for one weight byte (in ``scheme`` layout) and one activation byte.

    Accepts scalars or integer arrays; arrays yield an array with a trailing
    lane axis of length 4.
    """
    scheme = PackScheme.parse(scheme)
    scalar = np.ndim(w_byte) == 0 and np.ndim(a_byte) == 0
    w = np.asarray(w_byte, dtype=np.uint16) & 0xFF
    a = np.asarray(a_byte, dtype=np.uint16) & 0xFF
    lanes = np.stack(np.broadcast_arrays(*_EXTRACTORS[scheme](w, a)), axis=-1).astype(np.uint8)
    return [int(v) for v in lanes] if scalar else lanes


def gather_index_lut65k(w_byte, a_byte):
    w = np.asarray(w_byte, dtype=np.uint32) & 0xFF
    a = np.asarray(a_byte, dtype=np.uint32) & 0xFF
    idx = (w << 8) | a
    return int(idx) if idx.ndim == 0 else idx
