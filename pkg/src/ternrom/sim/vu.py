"""Vector-unit function approximations.

Each function uses only the operations a small VU datapath offers: add,
multiply, compare, exponent/mantissa split, and table-free polynomials or
Newton iterations. Every function stays within 1e-3 relative error, and most
are far tighter:

* ``exp``: range reduction x = n ln2 + r with |r| <= ln2/2, then a
  degree-7 Taylor polynomial. Relative error is below 1e-8, and exp(0) is
  exactly 1.
* ``reciprocal``: the mantissa m lies in [0.5, 1). The seed is
  48/17 - 32/17 m, followed by 4 Newton steps. A mantissa of exactly 0.5 is
  returned directly, so powers of two are exact.
* ``rsqrt`` / ``sqrt``: the input is normalized to [0.25, 1). A linear seed
  is followed by 5 Newton steps.
* ``gelu``: x * Phi(x). Phi is built on the Chebyshev erfc approximation
  (fractional error < 1.2e-7), which uses ``exp`` above.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DomainError

LN2 = math.log(2.0)
_EXP_COEFFS = [1.0 / math.factorial(k) for k in range(8)]   # degree 7


def _poly(coeffs, r):
    acc = np.full_like(r, coeffs[-1])
    for c in reversed(coeffs[:-1]):
        acc = acc * r + c
    return acc


def vu_exp(x):
    x = np.asarray(x, dtype=np.float64)
    if np.isnan(x).any():
        raise DomainError("exp of NaN")
    xc = np.clip(x, -1100.0, 709.0)
    n = np.rint(xc / LN2)
    r = xc - n * LN2
    out = np.ldexp(_poly(_EXP_COEFFS, r), n.astype(np.int64))
    out = np.where(x < -745.0, 0.0, out)
    return out


def vu_reciprocal(d):
    d = np.asarray(d, dtype=np.float64)
    if np.any(d == 0):
        raise DomainError("division by zero in vector unit")
    if not np.all(np.isfinite(d)):
        raise DomainError("reciprocal of a non-finite value")
    m, e = np.frexp(np.abs(d))          # |d| = m * 2**e, m in [0.5, 1)
    x = 48.0 / 17.0 - (32.0 / 17.0) * m
    for _ in range(4):
        x = x * (2.0 - m * x)
    x = np.where(m == 0.5, 2.0, x)
    return np.copysign(np.ldexp(x, -e), d)


def vu_div(a, b):
    return np.asarray(a, dtype=np.float64) * vu_reciprocal(b)


def vu_rsqrt(x):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise DomainError("rsqrt needs strictly positive input")
    m, e = np.frexp(x)
    odd = (e % 2) != 0
    m = np.where(odd, m * 0.5, m)       # m in [0.25, 1)
    e = np.where(odd, e + 1, e)
    y = 2.0 - 1.0 * m                   # linear seed for 1/sqrt(m) on [0.25, 1)
    for _ in range(5):
        y = y * (1.5 - 0.5 * m * y * y)
    y = np.where(m == 0.25, 2.0, y)
    return np.ldexp(y, -(e // 2))


def vu_sqrt(x):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise DomainError("square root of a negative number")
    safe = np.where(x == 0, 1.0, x)
    return np.where(x == 0, 0.0, safe * vu_rsqrt(safe))


def _erfc(z):
    """Chebyshev-fitted complementary error function (fractional error < 1.2e-7)."""
    z = np.asarray(z, dtype=np.float64)
    a = np.abs(z)
    t = 1.0 / (1.0 + 0.5 * a)
    poly = (-a * a - 1.26551223 + t * (1.00002368 + t * (0.37409196 + t * (0.09678418 + t * (
        -0.18628806 + t * (0.27886807 + t * (-1.13520398 + t * (1.48851587 + t * (
            -0.82215223 + t * 0.17087277)))))))))
    ans = t * vu_exp(poly)
    return np.where(z >= 0, ans, 2.0 - ans)


def vu_gelu(x):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * _erfc(-x / math.sqrt(2.0))


def vu_relu2(x):
    x = np.asarray(x, dtype=np.float64)
    r = np.maximum(x, 0.0)
    return r * r


def vu_add(a, b):
    return np.asarray(a, dtype=np.float64) + np.asarray(b, dtype=np.float64)


def _centered_exact(x_ints: np.ndarray):
    """n * x_i - sum(x) computed in exact integer arithmetic."""
    ints = [int(v) for v in x_ints]
    n = len(ints)
    s = sum(ints)
    return [n * v - s for v in ints], n


def vu_layernorm(x_ints, int_exp: int, eps: float = 1e-5):
    """LayerNorm (no affine) of the dyadic vector ``x_ints * 2**int_exp``.

    Centering is exact: the deviations are computed as integers, so a
    constant vector maps to exactly zero.
    """
    c, n = _centered_exact(np.asarray(x_ints))
    if n == 0:
        return np.zeros(0)
    # deviation_i = c_i / n * 2**int_exp
    dev = np.array([math.ldexp(float(v), int_exp) for v in c]) / n
    var = float(np.dot(dev, dev)) / n
    return dev * vu_rsqrt(var + eps)


def vu_rmsnorm(x_ints, int_exp: int, eps: float = 1e-6):
    v = np.ldexp(np.asarray(x_ints, dtype=np.float64), int_exp)
    if v.size == 0:
        return v
    ms = float(np.dot(v, v)) / v.size
    return v * vu_rsqrt(ms + eps)


def vu_softmax(scores):
    """Reference composition of the softmax pieces on one lane (used in tests)."""
    s = np.asarray(scores, dtype=np.float64)
    e = vu_exp(s - s.max())
    return vu_div(e, np.full_like(e, e.sum()))


VU_FUNCTIONS = {
    "exp": vu_exp, "div": vu_div, "sqrt": vu_sqrt, "rsqrt": vu_rsqrt, "reciprocal": vu_reciprocal,
    "gelu": vu_gelu, "relu2": vu_relu2, "add": vu_add, "softmax": vu_softmax,
}


def vu_apply(kind: str, *operands):
    """Dispatch by name; ``layernorm``/``rmsnorm`` take ``(ints, int_exp)``."""
    if kind == "layernorm":
        return vu_layernorm(*operands)
    if kind == "rmsnorm":
        return vu_rmsnorm(*operands)
    try:
        fn = VU_FUNCTIONS[kind]
    except KeyError:
        raise DomainError(f"unknown vector-unit operation {kind!r}") from None
    return fn(*operands)
