import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from ternrom.arch.config import HardwareConfig
from ternrom.arch.mapping import plan_mapping
from ternrom.errors import CapacityError, DomainError, InvariantError
from ternrom.fp8 import Fp8Tensor, ulp
from ternrom.model import ActivationKind, NormKind, make_toy_model, tensor_key
from ternrom.sim.engine import Engine, run_attention, run_linear, run_lora
from ternrom.sim.lanes import Lanes
from ternrom.sim.lora import LoraConfig, make_lora
from ternrom.sim.numerics import ternary_matvec
from ternrom.ternary import random_ternary

LANE_COUNTS = (1, 2, 4, 8, 16)


# -- linear layers ------------------------------------------------------------------
def test_run_linear_bit_identical_across_lane_counts(small_toy, hw, rng):
    x = Fp8Tensor.from_float(rng.normal(size=small_toy.hidden_dim) * 3)
    for name in ("Wq", "Wk", "W_ffn_up"):
        w = small_toy.tensor(1, name)
        ref = Fp8Tensor.from_float(w.scale * (w.values().astype(float) @ x.values()))
        for m in LANE_COUNTS:
            plan = plan_mapping(small_toy, replace(hw, num_lanes=m))
            res = run_linear(plan, 1, name, w, x)
            assert res.out == ref, (name, m)


def test_run_linear_zero_input(small_toy, hw):
    plan = plan_mapping(small_toy, hw)
    x = Fp8Tensor.from_float(np.zeros(small_toy.hidden_dim))
    res = run_linear(plan, 0, "Wq", small_toy.tensor(0, "Wq"), x)
    assert np.all(res.acc.values() == 0)


def test_run_linear_rejects_wrong_length(small_toy, hw):
    plan = plan_mapping(small_toy, hw)
    with pytest.raises(DomainError):
        run_linear(plan, 0, "Wq", small_toy.tensor(0, "Wq"), Fp8Tensor.from_float(np.ones(3)))


# -- attention -------------------------------------------------------------------------
def filled_lanes(model, hw, keys, values):
    lanes = Lanes(plan_mapping(model, hw))
    for p, (k, v) in enumerate(zip(keys, values)):
        lanes.append_kv(0, p, Fp8Tensor.from_float(k), Fp8Tensor.from_float(v))
    return lanes


def attention_reference(q, ks, vs, num_heads, head_dim, kvh):
    """Plain float64 softmax attention over dequantized values."""
    group = num_heads // kvh
    out = np.zeros(num_heads * head_dim)
    for h in range(num_heads):
        g = h // group
        qh = q[h * head_dim:(h + 1) * head_dim]
        kh = ks[:, g * head_dim:(g + 1) * head_dim]
        vh = vs[:, g * head_dim:(g + 1) * head_dim]
        s = kh @ qh / math.sqrt(head_dim)
        e = np.exp(s - s.max())
        out[h * head_dim:(h + 1) * head_dim] = (e / e.sum()) @ vh
    return out


def test_attention_single_position_returns_v(small_toy, hw, rng):
    m = small_toy
    k, v = rng.normal(size=m.kv_dim), rng.normal(size=m.kv_dim)
    lanes = filled_lanes(m, hw, [k], [v])
    q = Fp8Tensor.from_float(rng.normal(size=m.hidden_dim))
    res = run_attention(q, 0, lanes, 1, m.num_heads, m.head_dim, m.num_kv_heads)
    vq = Fp8Tensor.from_float(v).values().reshape(m.num_kv_heads, m.head_dim)
    expect = vq[np.arange(m.num_heads) // 2].ravel()
    assert np.array_equal(res.values, expect)


def test_attention_identical_keys_average_values(small_toy, hw, rng):
    m = small_toy
    k = rng.normal(size=m.kv_dim)
    v0, v1 = np.full(m.kv_dim, 1.0), np.full(m.kv_dim, 3.0)
    lanes = filled_lanes(m, hw, [k, k], [v0, v1])
    q = Fp8Tensor.from_float(rng.normal(size=m.hidden_dim))
    res = run_attention(q, 0, lanes, 2, m.num_heads, m.head_dim, m.num_kv_heads)
    assert np.all(res.values == 2.0)


@pytest.mark.parametrize("lanes_n", [1, 3, 16])
def test_attention_matches_float_reference(small_toy, hw, lanes_n):
    m = small_toy
    rng = np.random.default_rng(77)
    n = 40
    ks, vs = rng.normal(size=(n, m.kv_dim)) * 2, rng.normal(size=(n, m.kv_dim))
    lanes = filled_lanes(m, replace(hw, num_lanes=lanes_n), ks, vs)
    q = Fp8Tensor.from_float(rng.normal(size=m.hidden_dim) * 2)
    res = run_attention(q, 0, lanes, n, m.num_heads, m.head_dim, m.num_kv_heads)
    kq = np.array([Fp8Tensor.from_float(k).values() for k in ks])
    vq = np.array([Fp8Tensor.from_float(v).values() for v in vs])
    ref = attention_reference(q.values(), kq, vq, m.num_heads, m.head_dim, m.num_kv_heads)
    # Q.30 softmax numerators: ~1e-9 relative deviation from float64
    assert np.allclose(res.values, ref, rtol=1e-6, atol=1e-8)
    scale = 2.0 ** res.out.scale_exp
    for got, r in zip(res.out.values(), ref):
        assert abs(got - r) <= 2 * ulp(r / scale, res.out.fmt) * scale


def test_attention_partial_context_and_errors(small_toy, hw, rng):
    m = small_toy
    ks, vs = rng.normal(size=(5, m.kv_dim)), rng.normal(size=(5, m.kv_dim))
    lanes = filled_lanes(m, hw, ks, vs)
    q = Fp8Tensor.from_float(rng.normal(size=m.hidden_dim))
    three = run_attention(q, 0, filled_lanes(m, hw, ks[:3], vs[:3]), 3, m.num_heads, m.head_dim, 2)
    assert np.array_equal(run_attention(q, 0, lanes, 3, m.num_heads, m.head_dim, 2).values, three.values)
    with pytest.raises(InvariantError):
        run_attention(q, 0, lanes, 6, m.num_heads, m.head_dim, 2)
    with pytest.raises(CapacityError):
        run_attention(q, 0, lanes, hw.max_context + 1, m.num_heads, m.head_dim, 2)
    with pytest.raises(DomainError):
        run_attention(q, 0, lanes, 0, m.num_heads, m.head_dim, 2)


def test_kv_append_must_be_in_order(small_toy, hw):
    lanes = Lanes(plan_mapping(small_toy, hw))
    kv = Fp8Tensor.from_float(np.ones(small_toy.kv_dim))
    lanes.append_kv(0, 0, kv, kv)
    with pytest.raises(InvariantError):
        lanes.append_kv(0, 2, kv, kv)
    with pytest.raises(InvariantError):
        lanes.append_kv(0, 0, kv, kv)
    lanes.append_kv(0, 1, kv, kv)
    with pytest.raises(CapacityError):
        lanes.append_kv(0, hw.max_context, kv, kv)


# -- LoRA --------------------------------------------------------------------------------
def test_lora_merged_weight_oracle(rng):
    rows, cols, r = 24, 40, 4
    w = random_ternary(rng, rows, cols, 0.4, scale=0.25)
    a = random_ternary(rng, r, cols, 0.3, scale=0.5)
    b = random_ternary(rng, rows, r, 0.3, scale=0.125)
    x = Fp8Tensor.from_float(rng.normal(size=cols))
    lora = LoraConfig(r, {"Q"}, 0.5, {tensor_key(0, "Wq"): (a, b)})
    base = ternary_matvec(w.values(), x.ints(), x.int_exp, w.scale)
    got = run_lora(base, x, lora, 0, "Wq", num_lanes=3)
    merged = [[Fraction(w.scale) * int(w.values()[i, j])
               + Fraction(0.5 * a.scale * b.scale) * int((b.values().astype(int) @ a.values().astype(int))[i, j])
               for j in range(cols)] for i in range(rows)]
    xv = [Fraction(float(v)) for v in x.values()]
    ref = [float(sum((mij * xj for mij, xj in zip(row, xv)), Fraction(0))) for row in merged]
    assert list(got) == ref


def test_lora_neutral_cases(small_toy, hw):
    prompt = [3, 9, 27]
    base_tokens, base = Engine(small_toy, hw).generate(prompt, 3)
    for lora in (LoraConfig(0, {"Q", "V"}), make_lora(small_toy, 8, ("Q", "V"), zero_b=True)):
        toks, res = Engine(small_toy, hw, lora=lora).generate(prompt, 3)
        assert toks == base_tokens
        assert all(np.array_equal(a.hidden, b.hidden) for a, b in zip(res, base))
    lora = make_lora(small_toy, 8, ("Q", "V", "FFN-up"), seed=2)
    _, res = Engine(small_toy, hw, lora=lora).generate(prompt, 3)
    assert not np.array_equal(res[-1].hidden, base[-1].hidden)


def test_lora_sram_budget(small_toy, hw):
    lora = make_lora(small_toy, 8, ("Q",))
    with pytest.raises(CapacityError, match="SRAM budget"):
        Engine(small_toy, hw, lora=lora, sram_bytes=small_toy.kv_bytes_per_token() * hw.max_context)


# -- full decoder ------------------------------------------------------------------------
def reference_decoder(model, tokens, fmt):
    """Float64 single-sequence decoder with the same FP8 re-quantization points."""
    q8 = lambda v: Fp8Tensor.from_float(v, fmt).values()

    def norm(x):
        if model.norm_kind == NormKind.RMSNORM:
            return x / np.sqrt(np.mean(x * x) + 1e-6)
        return (x - x.mean()) / np.sqrt(x.var() + 1e-5)

    def act(v):
        if model.activation_kind == ActivationKind.RELU2:
            return np.maximum(v, 0) ** 2
        return np.array([0.5 * t * (1 + math.erf(t / math.sqrt(2))) for t in v])

    def lin(layer, name, x):
        w = model.tensor(layer, name)
        return q8(w.scale * (w.values().astype(float) @ x))

    emb = model.embed
    cache = [([], []) for _ in range(model.num_layers)]
    hiddens = []
    for tok in tokens:
        x = q8(emb.values()[tok].astype(float) * emb.scale)
        for layer in range(model.num_layers):
            h = q8(norm(x))
            q, k, v = lin(layer, "Wq", h), lin(layer, "Wk", h), lin(layer, "Wv", h)
            cache[layer][0].append(k)
            cache[layer][1].append(v)
            att = q8(attention_reference(q, np.array(cache[layer][0]), np.array(cache[layer][1]),
                                         model.num_heads, model.head_dim, model.num_kv_heads))
            x = q8(x + lin(layer, "Wo", att))
            h = q8(norm(x))
            up = lin(layer, "W_ffn_up", h)
            a = q8(act(lin(layer, "W_ffn_gate", h)) * up) if model.gated_ffn else q8(act(up))
            x = q8(x + lin(layer, "W_ffn_down", a))
        hiddens.append(norm(x))
    return hiddens


@pytest.mark.parametrize("kw", [{}, {"norm_kind": NormKind.RMSNORM, "activation_kind": ActivationKind.RELU2,
                                     "gated_ffn": True}])
def test_decoder_matches_reference(hw, kw):
    model = make_toy_model(seed=11, num_layers=1, hidden_dim=64, ffn_dim=96, num_heads=4, num_kv_heads=2,
                           vocab_size=32, **kw)
    tokens = [1, 5, 9, 2, 30, 7]
    eng = Engine(model, hw)
    got = [eng.step(t).hidden for t in tokens]
    ref = reference_decoder(model, tokens, hw.fmt)
    for g, r in zip(got, ref):
        assert np.linalg.norm(g - r) <= 0.02 * np.linalg.norm(r)


def test_generation_partition_invariant(small_toy, hw):
    prompt = [1, 2, 3, 4]
    outs = []
    for m in (16, 3, 1):
        toks, res = Engine(small_toy, replace(hw, num_lanes=m)).generate(prompt, 4)
        outs.append((toks, np.array([r.hidden for r in res])))
    for toks, hid in outs[1:]:
        assert toks == outs[0][0]
        assert np.array_equal(hid, outs[0][1])


def test_snapshot_replay(small_toy, hw):
    eng = Engine(small_toy, hw)
    for t in (4, 8, 15):
        eng.step(t)
    snap = eng.snapshot()
    a = [eng.step(t).hidden for t in (16, 23)]
    b = [snap.step(t).hidden for t in (16, 23)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert eng.position == snap.position == 5


def test_hidden_vector_input_and_errors(small_toy, hw, rng):
    eng = Engine(small_toy, hw)
    r = eng.step(rng.normal(size=small_toy.hidden_dim))
    assert r.position == 0 and r.logits.shape == (small_toy.vocab_size,)
    assert r.next_token == int(np.argmax(r.logits))
    assert r.trace
    with pytest.raises(DomainError):
        eng.step(np.ones(3))
    with pytest.raises(DomainError):
        eng.step(small_toy.vocab_size)
    with pytest.raises(DomainError):
        Engine(small_toy.shape_only(), hw)


def test_capacity_at_max_context(small_toy):
    hw4 = HardwareConfig().with_context(4)
    eng = Engine(small_toy, hw4)
    with pytest.raises(CapacityError):
        eng.generate([1, 2, 3, 4], 2)
    eng.generate([1, 2, 3, 4], 1)
    assert eng.position == 4
    with pytest.raises(CapacityError, match="context is full"):
        eng.step(1)


def test_attention_context_64_hidden_256(hw):
    rng = np.random.default_rng(64)
    m = make_toy_model(seed=1, num_layers=1, hidden_dim=256, ffn_dim=64, num_heads=4, vocab_size=0)
    ks, vs = rng.normal(size=(64, m.kv_dim)), rng.normal(size=(64, m.kv_dim))
    lanes = filled_lanes(m, hw, ks, vs)
    q = Fp8Tensor.from_float(rng.normal(size=256) * 3)
    res = run_attention(q, 0, lanes, 64, m.num_heads, m.head_dim, m.num_kv_heads)
    kq = np.array([Fp8Tensor.from_float(k).values() for k in ks])
    vq = np.array([Fp8Tensor.from_float(v).values() for v in vs])
    ref = attention_reference(q.values(), kq, vq, m.num_heads, m.head_dim, m.num_kv_heads)
    scale = 2.0 ** res.out.scale_exp
    assert max(abs(g - r) / (ulp(r / scale, res.out.fmt) * scale) for g, r in zip(res.out.values(), ref)) <= 2
