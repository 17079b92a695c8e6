from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ternrom.errors import DomainError
from ternrom.fp8 import Fp8Format, Fp8Tensor
from ternrom.sim.numerics import (Accum, ReductionTree, add_exact, gemv_fp8_fp8, gemv_ternary_fp8,
                                  ternary_matvec)
from ternrom.ternary import TernaryMatrix, random_ternary


def exact(values):
    return [Fraction(float(v)) for v in values]


def scalar_gemv(w: np.ndarray, xs):
    """Per-element conditional add/subtract loop over Fractions."""
    out = []
    for row in w:
        acc = Fraction(0)
        for c, x in zip(row, xs):
            if c == 1:
                acc += x
            elif c == -1:
                acc -= x
        out.append(acc)
    return out


def accum_fractions(a: Accum):
    return [Fraction(int(i)) * Fraction(2) ** a.exp for i in a.ints]


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 24), st.integers(1, 40), st.integers(0, 2**31), st.sampled_from(["E4M3", "E5M2"]))
def test_ternary_gemv_matches_scalar_loop(rows, cols, seed, fmt):
    rng = np.random.default_rng(seed)
    w = random_ternary(rng, rows, cols, 0.4, scale=1.0)
    x = Fp8Tensor.from_float(rng.normal(size=cols) * 10, fmt)
    got = gemv_ternary_fp8(w, x)
    assert accum_fractions(got) == scalar_gemv(w.values(), exact(x.values()))


def test_signed_permutation_and_zero_matrix(rng):
    x = Fp8Tensor.from_float(rng.normal(size=16))
    perm = rng.permutation(16)
    signs = rng.choice([-1, 1], 16)
    p = np.zeros((16, 16), np.int8)
    p[np.arange(16), perm] = signs
    y = gemv_ternary_fp8(TernaryMatrix.from_values(p), x).values()
    assert np.array_equal(y, signs * x.values()[perm])
    z = gemv_ternary_fp8(TernaryMatrix.zeros(5, 16), x).values()
    assert np.all(z == 0.0)
    i = gemv_ternary_fp8(TernaryMatrix.from_values(np.eye(16, dtype=np.int8)), x).values()
    assert np.array_equal(i, x.values())


def test_weight_scale_applied_in_epilogue(rng):
    w = random_ternary(rng, 4, 8, 0.3, scale=0.37)
    x = Fp8Tensor.from_float(rng.normal(size=8))
    acc = gemv_ternary_fp8(w, x)
    assert acc.scale == w.scale
    assert np.allclose(acc.values(), 0.37 * (w.values() @ x.values()), rtol=1e-12)


def test_dimension_mismatch():
    with pytest.raises(DomainError):
        gemv_ternary_fp8(TernaryMatrix.zeros(2, 3), Fp8Tensor.from_float(np.ones(4)))
    with pytest.raises(DomainError):
        gemv_fp8_fp8(Fp8Tensor.from_float(np.ones((2, 3))), Fp8Tensor.from_float(np.ones(4)))


def test_fp8_fp8_gemv_matches_fraction_oracle(rng):
    a = Fp8Tensor.from_float(rng.normal(size=(7, 33)) * 3)
    x = Fp8Tensor.from_float(rng.normal(size=33) / 5)
    got = accum_fractions(gemv_fp8_fp8(a, x))
    av, xv = a.values(), exact(x.values())
    ref = [sum((Fraction(float(p)) * q for p, q in zip(row, xv)), Fraction(0)) for row in av]
    assert got == ref


def test_wide_accumulator_falls_back_to_python_ints():
    big = np.array([2**61, 2**61], dtype=np.int64)
    s = add_exact(Accum(big, 0), Accum(big, 0))
    assert s.ints.dtype == object and int(s.ints[0]) == 2**62
    wide = ternary_matvec(np.ones((1, 4), np.int8), np.array([2**61] * 4, dtype=object), 0)
    assert int(wide.ints[0]) == 2**63


def test_exact_sum_is_partition_invariant(rng):
    w = random_ternary(rng, 12, 96, 0.4, scale=1.0).values()
    x = Fp8Tensor.from_float(rng.normal(size=96), Fp8Format.E5M2)
    full = ternary_matvec(w, x.ints(), x.int_exp)
    for parts in (2, 3, 5, 16):
        edges = np.linspace(0, 96, parts + 1).astype(int)
        partials = [ternary_matvec(w[:, a:b], x.ints()[a:b], x.int_exp) for a, b in zip(edges, edges[1:])]
        tree = ReductionTree(parts).sum(partials)
        assert tree.exact_equal(full)


def test_reduction_tree_pairing_order():
    seen = []

    class Tag(str):
        def __add__(self, other):
            seen.append((str(self), str(other)))
            return Tag(f"({self}+{other})")

    out = ReductionTree(5).sum([Tag(c) for c in "abcde"])
    assert out == "(((a+b)+(c+d))+e)"
    assert seen[:2] == [("a", "b"), ("c", "d")]
    assert ReductionTree(4).max([1, 7, 3, 2]) == 7
    with pytest.raises(DomainError):
        ReductionTree(4).sum([1, 2])


def test_align_and_exact_equal():
    a = Accum(np.array([3, -5], np.int64), 2)
    b = a.aligned(-3)
    assert b.exp == -3 and list(b.ints) == [96, -160]
    assert a.exact_equal(b)
    with pytest.raises(DomainError):
        b.aligned(0)
    with pytest.raises(DomainError):
        add_exact(Accum(np.ones(1, np.int64), 0, 1.0), Accum(np.ones(1, np.int64), 0, 2.0))


def test_named_shapes(rng):
    w = random_ternary(rng, 64, 64, 0.4, scale=1.0)
    x = Fp8Tensor.from_float(rng.normal(size=64) * 7)
    assert accum_fractions(gemv_ternary_fp8(w, x)) == scalar_gemv(w.values(), exact(x.values()))
    a = Fp8Tensor.from_float(rng.normal(size=(32, 32)))
    x = Fp8Tensor.from_float(rng.normal(size=32))
    ref = [sum((Fraction(float(p)) * q for p, q in zip(row, exact(x.values()))), Fraction(0)) for row in a.values()]
    assert accum_fractions(gemv_fp8_fp8(a, x)) == ref
    zero = gemv_fp8_fp8(a, Fp8Tensor.from_float(np.zeros(32)))
    assert np.all(zero.values() == 0)
    eye = gemv_fp8_fp8(Fp8Tensor.from_float(np.eye(32) * 4.0), x)
    assert np.array_equal(eye.values(), 4.0 * x.values())
