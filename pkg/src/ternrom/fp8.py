"""Software FP8 (E4M3 / E5M2) with round-to-nearest-even and saturation.

E4M3 follows the "fn" convention used for inference: no infinities, a single
NaN mantissa pattern (S.1111.111) and a maximum finite magnitude of 448.
E5M2 is IEEE-like: S.11111.00 is infinity, other all-ones exponents are NaN.

Every finite FP8 value is an integer multiple of the format's smallest
subnormal, so ``Fp8Tensor.ints()`` gives an exact integer view that the
GEMV units accumulate without rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError, FormatError


@dataclass(frozen=True)
class _FormatSpec:
    name: str
    exp_bits: int
    man_bits: int
    bias: int
    has_inf: bool

    @property
    def frac_bits(self) -> int:
        # exponent of the smallest subnormal is 1 - bias - man_bits
        return self.bias - 1 + self.man_bits


class Fp8Format(Enum):
    E4M3 = _FormatSpec("E4M3", 4, 3, 7, False)
    E5M2 = _FormatSpec("E5M2", 5, 2, 15, True)

    @classmethod
    def parse(cls, name) -> "Fp8Format":
        if isinstance(name, Fp8Format):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise DomainError(f"unknown FP8 format {name!r}; expected E4M3 or E5M2") from None

    @property
    def spec(self) -> _FormatSpec:
        return self.value

    @property
    def frac_bits(self) -> int:
        return self.value.frac_bits

    @property
    def max_finite(self) -> float:
        return float(_tables(self).max_finite)

    @property
    def max_code(self) -> int:
        return _tables(self).max_code


def _decode_one(code: int, s: _FormatSpec) -> float:
    sign = -1.0 if code & 0x80 else 1.0
    e = (code >> s.man_bits) & ((1 << s.exp_bits) - 1)
    m = code & ((1 << s.man_bits) - 1)
    e_all = (1 << s.exp_bits) - 1
    if e == e_all:
        if s.has_inf:
            return sign * math.inf if m == 0 else math.nan
        if m == (1 << s.man_bits) - 1:
            return math.nan
    if e == 0:
        return sign * math.ldexp(m, 1 - s.bias - s.man_bits)
    return sign * math.ldexp((1 << s.man_bits) + m, e - s.bias - s.man_bits)


@dataclass(frozen=True)
class _Tables:
    values: np.ndarray        # float64[256]
    ints: np.ndarray          # int64[256]; value * 2**frac_bits, 0 for non-finite
    finite: np.ndarray        # bool[256]
    magnitudes: np.ndarray    # ascending positive magnitudes for codes 0..max_code
    max_code: int
    max_finite: float


_TABLE_CACHE: dict = {}


def _tables(fmt: Fp8Format) -> _Tables:
    t = _TABLE_CACHE.get(fmt)
    if t is None:
        s = fmt.spec
        values = np.array([_decode_one(c, s) for c in range(256)])
        finite = np.isfinite(values)
        ints = np.zeros(256, np.int64)
        ints[finite] = np.round(np.ldexp(values[finite], s.frac_bits)).astype(np.int64)
        max_code = max(c for c in range(128) if finite[c])
        mags = values[: max_code + 1].copy()
        for arr in (values, ints, finite, mags):
            arr.setflags(write=False)
        t = _Tables(values, ints, finite, mags, max_code, float(values[max_code]))
        _TABLE_CACHE[fmt] = t
    return t


def decode_table(fmt=Fp8Format.E4M3) -> np.ndarray:
    return _tables(Fp8Format.parse(fmt)).values


def int_table(fmt=Fp8Format.E4M3) -> np.ndarray:
    return _tables(Fp8Format.parse(fmt)).ints


def is_nan_code(codes, fmt=Fp8Format.E4M3) -> np.ndarray:
    return np.isnan(_tables(Fp8Format.parse(fmt)).values[np.asarray(codes, np.uint8)])


def fp8_quantize(x, fmt=Fp8Format.E4M3):
    """Round reals to FP8 codes (nearest, ties to even); overflow saturates.

    Accepts a scalar or an array and returns the same shape as uint8 codes
    (a plain ``int`` for scalar input). NaN raises ``DomainError``;
    infinities saturate like any other overflow.
    """
    fmt = Fp8Format.parse(fmt)
    t = _tables(fmt)
    scalar = np.ndim(x) == 0
    a = np.asarray(x, dtype=np.float64)
    if np.isnan(a).any():
        raise DomainError("cannot quantize NaN to FP8")
    mag = np.abs(a)
    mags = t.magnitudes
    hi = np.searchsorted(mags, mag, side="left")
    hi = np.minimum(hi, t.max_code)
    lo = np.maximum(hi - 1, 0)
    d_lo = mag - mags[lo]
    d_hi = mags[hi] - mag
    pick_hi = (d_hi < d_lo) | ((d_hi == d_lo) & (hi % 2 == 0))
    code = np.where(pick_hi, hi, lo)
    code = np.where(mag >= mags[t.max_code], t.max_code, code)
    code = code.astype(np.uint8) | np.where(np.signbit(a), 0x80, 0).astype(np.uint8)
    return int(code) if scalar else code


def fp8_dequantize(code, fmt=Fp8Format.E4M3):
    fmt = Fp8Format.parse(fmt)
    vals = _tables(fmt).values[np.asarray(code, dtype=np.uint8)]
    return float(vals) if np.ndim(code) == 0 else vals


def ulp(x: float, fmt=Fp8Format.E4M3) -> float:
    """Spacing of FP8 values at magnitude ``x`` (subnormal spacing below the normal range)."""
    s = Fp8Format.parse(fmt).spec
    x = abs(float(x))
    min_normal_exp = 1 - s.bias
    e = math.frexp(x)[1] - 1 if x > 0 else min_normal_exp
    e = max(e, min_normal_exp)
    return math.ldexp(1.0, e - s.man_bits)


def pow2_scale_exponent(amax: float, fmt=Fp8Format.E4M3) -> int:
    """Smallest ``e`` such that ``amax / 2**e`` fits the format's finite range."""
    fmt = Fp8Format.parse(fmt)
    if not amax > 0 or not math.isfinite(amax):
        return 0
    maxf = fmt.max_finite
    e = math.ceil(math.log2(amax / maxf))
    while math.ldexp(amax, -e) > maxf:
        e += 1
    while math.ldexp(amax, -(e - 1)) <= maxf:
        e -= 1
    return e


@dataclass(frozen=True, eq=False)
class Fp8Tensor:
    """FP8 codes sharing one power-of-two scale: ``value = decode(code) * 2**scale_exp``.

    The power-of-two scale keeps every element a dyadic rational, which is
    what makes the wide fixed-point accumulation exact.
    """

    codes: np.ndarray
    fmt: Fp8Format = Fp8Format.E4M3
    scale_exp: int = 0
    _checked: bool = field(default=False, repr=False)

    def __post_init__(self):
        codes = np.ascontiguousarray(self.codes, dtype=np.uint8)
        fmt = Fp8Format.parse(self.fmt)
        if np.any(~_tables(fmt).finite[codes]):
            bad = int(np.flatnonzero(~_tables(fmt).finite[codes].ravel())[0])
            raise FormatError(f"non-finite {fmt.name} code at element {bad}", offset=bad)
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "fmt", fmt)
        object.__setattr__(self, "scale_exp", int(self.scale_exp))

    @classmethod
    def from_float(cls, x, fmt=Fp8Format.E4M3, scale_exp: int | None = None) -> "Fp8Tensor":
        fmt = Fp8Format.parse(fmt)
        a = np.asarray(x, dtype=np.float64)
        if np.isnan(a).any():
            raise DomainError("cannot quantize NaN to FP8")
        if scale_exp is None:
            scale_exp = pow2_scale_exponent(float(np.max(np.abs(a))) if a.size else 0.0, fmt)
        codes = fp8_quantize(np.ldexp(a, -scale_exp), fmt)
        return cls(np.asarray(codes, np.uint8), fmt, scale_exp)

    @property
    def shape(self):
        return self.codes.shape

    def __len__(self):
        return len(self.codes)

    @property
    def int_exp(self) -> int:
        """Binary exponent of one unit of :meth:`ints`."""
        return self.scale_exp - self.fmt.frac_bits

    def ints(self) -> np.ndarray:
        return _tables(self.fmt).ints[self.codes]

    def values(self) -> np.ndarray:
        return np.ldexp(_tables(self.fmt).values[self.codes], self.scale_exp)

    def __getitem__(self, idx) -> "Fp8Tensor":
        return Fp8Tensor(self.codes[idx], self.fmt, self.scale_exp)

    def __eq__(self, other):
        if not isinstance(other, Fp8Tensor):
            return NotImplemented
        return self.fmt == other.fmt and self.scale_exp == other.scale_exp and np.array_equal(self.codes, other.codes)

    __hash__ = None


def quantize_tensor(x, fmt=Fp8Format.E4M3) -> Fp8Tensor:
    return Fp8Tensor.from_float(x, fmt)
