"""Exact wide accumulation, GEMV kernels and the global reduction tree.

Every FP8 value with a power-of-two tensor scale is an integer times a power
of two. Dot products can therefore be carried out exactly on integers. The
accumulator holds ``ints * 2**exp``, plus the real per-tensor weight scale,
which is applied only in the epilogue. Exact sums are associative, so any
tiling of the work gives bit-identical results.

``int64`` is used whenever the worst-case magnitude provably fits. Beyond
that, arrays of Python integers are used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..fp8 import Fp8Tensor
from ..ternary import TernaryMatrix

_SAFE_BITS = 62


def _bits(x: int) -> int:
    return int(abs(int(x))).bit_length()


def _max_abs(ints: np.ndarray) -> int:
    if ints.size == 0:
        return 0
    if ints.dtype == object:
        return max(abs(int(v)) for v in ints.ravel())
    return int(np.max(np.abs(ints)))


def to_object(ints: np.ndarray) -> np.ndarray:
    flat = np.asarray(ints).ravel()
    out = np.empty(flat.size, dtype=object)
    for i, v in enumerate(flat):
        out[i] = int(v)
    return out.reshape(np.shape(ints))


@dataclass(frozen=True, eq=False)
class Accum:
    """Exact extended-precision vector ``scale * ints * 2**exp``."""

    ints: np.ndarray
    exp: int
    scale: float = 1.0

    def __len__(self):
        return len(self.ints)

    def values(self) -> np.ndarray:
        if self.ints.dtype == object:
            v = np.array([math.ldexp(float(i), self.exp) for i in self.ints], dtype=np.float64)
        else:
            v = np.ldexp(self.ints.astype(np.float64), self.exp)
        return v * self.scale

    def aligned(self, exp: int) -> "Accum":
        """Same value expressed at a smaller exponent (exact left shift)."""
        if exp > self.exp:
            raise DomainError("can only align to a smaller exponent")
        shift = self.exp - exp
        if shift == 0:
            return self
        ints = self.ints
        if ints.dtype != object and _bits(_max_abs(ints)) + shift <= _SAFE_BITS:
            return Accum(ints << shift, exp, self.scale)
        obj = to_object(ints)
        return Accum(np.array([v << shift for v in obj], dtype=object).reshape(ints.shape), exp, self.scale)

    def exact_equal(self, other: "Accum") -> bool:
        """Equality of the represented exact values (scale compared as a number)."""
        if self.scale != other.scale or len(self) != len(other):
            return False
        e = min(self.exp, other.exp)
        a, b = self.aligned(e).ints, other.aligned(e).ints
        return all(int(x) == int(y) for x, y in zip(a, b))


def add_exact(a: Accum, b: Accum) -> Accum:
    if a.scale != b.scale:
        raise DomainError("cannot add accumulators with different scales exactly")
    e = min(a.exp, b.exp)
    a, b = a.aligned(e), b.aligned(e)
    if a.ints.dtype != object and b.ints.dtype != object and \
            max(_bits(_max_abs(a.ints)), _bits(_max_abs(b.ints))) + 1 <= _SAFE_BITS:
        return Accum(a.ints + b.ints, e, a.scale)
    return Accum(to_object(a.ints) + to_object(b.ints), e, a.scale)


def _matvec(w: np.ndarray, x: np.ndarray, bound_bits: int) -> np.ndarray:
    """Exact integer matrix-vector product."""
    if bound_bits <= _SAFE_BITS and x.dtype != object:
        return w.astype(np.int64) @ x.astype(np.int64)
    xo = to_object(np.asarray(x))
    wo = np.asarray(w)
    return np.array([sum(int(c) * v for c, v in zip(row, xo) if c) for row in wo], dtype=object) \
        if wo.size else np.zeros(wo.shape[0], dtype=object)


def gemv_ternary_fp8(w: TernaryMatrix, x: Fp8Tensor) -> Accum:
    """y = w.scale * (W @ x), exactly accumulated; every MAC is a conditional negation."""
    if w.cols != len(x):
        raise DomainError(f"dimension mismatch: matrix has {w.cols} columns, vector has {len(x)} elements")
    return ternary_matvec(w.values(), x.ints(), x.int_exp, w.scale)


def ternary_matvec(values: np.ndarray, x_ints: np.ndarray, int_exp: int, scale: float = 1.0) -> Accum:
    values = np.asarray(values)
    if values.shape[1] != len(x_ints):
        raise DomainError(f"dimension mismatch: {values.shape[1]} columns vs {len(x_ints)} inputs")
    bound = _bits(_max_abs(np.asarray(x_ints))) + max(values.shape[1], 1).bit_length()
    return Accum(_matvec(values, np.asarray(x_ints), bound), int_exp, scale)


def gemv_fp8_fp8(a: Fp8Tensor, x: Fp8Tensor) -> Accum:
    """y = A @ x for an FP8 matrix and vector; products and sums are exact."""
    if a.codes.ndim != 2 or a.codes.shape[1] != len(x):
        raise DomainError(f"dimension mismatch: matrix {a.codes.shape} vs vector {len(x)}")
    ai, xi = a.ints(), x.ints()
    bound = _bits(_max_abs(ai)) + _bits(_max_abs(xi)) + max(a.codes.shape[1], 1).bit_length()
    if bound <= _SAFE_BITS:
        ints = ai @ xi
    else:
        ints = np.array([sum(int(p) * int(q) for p, q in zip(row, xi)) for row in ai], dtype=object)
    return Accum(ints, a.int_exp + x.int_exp)


@dataclass(frozen=True)
class ReductionTree:
    """Global M-input reduction with a fixed pairwise schedule.

    Level k combines (0,1), (2,3), ... of level k-1; an odd trailing input is
    carried up unchanged. The pairing never depends on arrival order.
    """

    fan_in: int
    latency_cycles: int = 0

    def _reduce(self, parts, combine):
        if len(parts) != self.fan_in:
            raise DomainError(f"reduction tree expects {self.fan_in} inputs, got {len(parts)}")
        level = list(parts)
        while len(level) > 1:
            nxt = [combine(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
            if len(level) % 2:
                nxt.append(level[-1])
            level = nxt
        return level[0]

    def sum(self, parts):
        """Sum of :class:`Accum` partials (exact) or of plain ints / arrays."""
        def combine(a, b):
            if isinstance(a, Accum):
                return add_exact(a, b)
            return a + b
        return self._reduce(parts, combine)

    def max(self, parts):
        return self._reduce(parts, lambda a, b: np.maximum(a, b) if isinstance(a, np.ndarray) else max(a, b))
