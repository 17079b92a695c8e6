"""Ternary weight encoding, packed matrices and sparsity statistics.

Encoding (two bits per weight, chosen to maximise zero bits):

    00 =  0
    01 = +1
    10 = -1
    11 = invalid, never stored

Four codes are packed per byte; the first element of a matrix sits in the
low two bits of the first byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Mapping

import numpy as np

from .errors import DomainError, FormatError


class TernaryCode(IntEnum):
    ZERO = 0b00
    POS = 0b01
    NEG = 0b10


_DECODE = np.array([0, 1, -1, 0], dtype=np.int8)


def encode_ternary(v: int) -> TernaryCode:
    if v == 0:
        return TernaryCode.ZERO
    if v == 1:
        return TernaryCode.POS
    if v == -1:
        return TernaryCode.NEG
    raise DomainError(f"ternary value must be -1, 0 or +1, got {v!r}")


def decode_ternary(code: int) -> int:
    if code not in (0, 1, 2):
        raise DomainError(f"invalid ternary code {code:#04b}")
    return int(_DECODE[code])


def values_to_codes(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values)
    if values.size and (values.min() < -1 or values.max() > 1 or not np.all(values == np.round(values))):
        raise DomainError("ternary values must lie in {-1, 0, +1}")
    v = values.astype(np.int8)
    return np.where(v == 1, 1, np.where(v == -1, 2, 0)).astype(np.uint8)


def codes_to_values(codes: np.ndarray) -> np.ndarray:
    return _DECODE[np.asarray(codes, dtype=np.uint8)]


def pack_codes(codes: np.ndarray) -> np.ndarray:
    flat = np.asarray(codes, dtype=np.uint8).ravel()
    pad = (-flat.size) % 4
    if pad:
        flat = np.concatenate([flat, np.zeros(pad, np.uint8)])
    q = flat.reshape(-1, 4)
    return (q[:, 0] | (q[:, 1] << 2) | (q[:, 2] << 4) | (q[:, 3] << 6)).astype(np.uint8)


def unpack_codes(packed: np.ndarray, count: int) -> np.ndarray:
    packed = np.asarray(packed, dtype=np.uint8)
    out = np.empty((packed.size, 4), np.uint8)
    for k in range(4):
        out[:, k] = (packed >> (2 * k)) & 0b11
    return out.ravel()[:count]


def packed_length(rows: int, cols: int) -> int:
    return (rows * cols * 2 + 7) // 8


@dataclass(frozen=True, eq=False)
class TernaryMatrix:
    """Row-major packed ternary matrix with a per-tensor real scale.

    ``y = scale * (W @ x)`` where ``W`` holds the decoded {-1, 0, +1} entries.
    Rows index outputs and columns index inputs.
    """

    rows: int
    cols: int
    packed: np.ndarray
    scale: float = 1.0
    _codes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        packed = np.ascontiguousarray(self.packed, dtype=np.uint8).ravel()
        expected = packed_length(self.rows, self.cols)
        if packed.size != expected:
            raise FormatError(f"packed length {packed.size} != expected {expected} for {self.rows}x{self.cols}")
        codes = unpack_codes(packed, self.rows * self.cols)
        if np.any(codes == 3):
            bad = int(np.flatnonzero(codes == 3)[0])
            raise FormatError(f"invalid ternary code 11 at element {bad}", offset=bad // 4)
        packed.setflags(write=False)
        codes.setflags(write=False)
        object.__setattr__(self, "packed", packed)
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "_codes", codes)

    @classmethod
    def from_values(cls, values, scale: float = 1.0) -> "TernaryMatrix":
        values = np.asarray(values)
        if values.ndim != 2:
            raise DomainError(f"expected a 2-D array, got {values.ndim}-D")
        rows, cols = values.shape
        return cls(rows, cols, pack_codes(values_to_codes(values)), scale)

    @classmethod
    def zeros(cls, rows: int, cols: int, scale: float = 1.0) -> "TernaryMatrix":
        return cls(rows, cols, np.zeros(packed_length(rows, cols), np.uint8), scale)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @property
    def nbytes(self) -> int:
        return self.packed.size

    def codes(self) -> np.ndarray:
        """Flat row-major 2-bit codes (read-only view)."""
        return self._codes

    def values(self) -> np.ndarray:
        return codes_to_values(self._codes).reshape(self.rows, self.cols)

    def __eq__(self, other):
        if not isinstance(other, TernaryMatrix):
            return NotImplemented
        return (self.rows, self.cols, self.scale) == (other.rows, other.cols, other.scale) and np.array_equal(
            self.packed, other.packed
        )

    __hash__ = None


@dataclass(frozen=True)
class SparsityStats:
    total: int
    zeros: int
    zero_value_ratio: float
    zero_bit_ratio: float
    per_tensor: Mapping[str, "SparsityStats"] = field(default_factory=dict)


def _stats_from_counts(total: int, zeros: int, per_tensor=None) -> SparsityStats:
    if total == 0:
        return SparsityStats(0, 0, 0.0, 0.0, per_tensor or {})
    # each zero weight contributes two zero bits, each +-1 exactly one
    zero_bits = 2 * zeros + (total - zeros)
    return SparsityStats(total, zeros, zeros / total, zero_bits / (2 * total), per_tensor or {})


def sparsity_stats(m: TernaryMatrix) -> SparsityStats:
    zeros = int(np.count_nonzero(m.codes() == 0))
    return _stats_from_counts(m.size, zeros)


def combined_sparsity(tensors: Mapping[str, TernaryMatrix]) -> SparsityStats:
    per = {name: sparsity_stats(t) for name, t in tensors.items()}
    total = sum(s.total for s in per.values())
    zeros = sum(s.zeros for s in per.values())
    return _stats_from_counts(total, zeros, per)


def random_ternary(rng: np.random.Generator, rows: int, cols: int, zero_value_ratio: float,
                   scale: float | None = None) -> TernaryMatrix:
    """Seeded ternary matrix with i.i.d. entries; nonzeros are +-1 with equal odds."""
    if not 0.0 <= zero_value_ratio <= 1.0:
        raise DomainError(f"zero_value_ratio must be in [0, 1], got {zero_value_ratio}")
    u = rng.random((rows, cols))
    sign = rng.random((rows, cols)) < 0.5
    vals = np.where(u < zero_value_ratio, 0, np.where(sign, 1, -1)).astype(np.int8)
    if scale is None:
        density = max(1.0 - zero_value_ratio, 1e-3)
        scale = 1.0 / np.sqrt(max(cols, 1) * density)
    return TernaryMatrix.from_values(vals, scale)
