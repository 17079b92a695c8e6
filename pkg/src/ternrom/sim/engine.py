"""Functional token-by-token execution on the mapped lanes.

Numerics:

* Linear layers: each MVU forms exact integer partial sums over its chunk of
  the lane tile. The lane adds its MVU partials, and the reduction tree adds
  the lane partials in fixed pairwise order. The per-tensor ternary scale is
  applied in the epilogue, and the result is re-quantized to FP8 with a
  fresh power-of-two scale.
* Attention follows the five-step distributed dataflow:

  0. Local scores q.k_p are formed exactly, then scaled by 1/sqrt(hd) in
     float64. Each lane takes its local max.
  1. The reduction tree forms the global max.
  2. Each lane computes exp(s - m) on its VU. The results are rounded to
     Q.30 integers and summed locally; the tree forms the global denominator.
  3. Each lane forms sum_p e_p * v_p exactly, in wide fixed point.
  4. The tree sums the lane numerators. The VU multiplies by the reciprocal
     of the denominator, and the output is re-quantized to FP8.

* Norms and activations run in float64 on the VU, with re-quantization after
  each. Residual sums are re-quantized to FP8.
* LoRA: ``A x`` stays in the wide accumulator, so ``B (A x)`` is exact. It
  is added to the base output in float64. With power-of-two scales the sum
  is exact.
* The LM head is host-side: tied embedding logits in float64, greedy argmax,
  ties broken toward the lowest token id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..arch.config import HardwareConfig
from ..arch.mapping import MappingPlan, lane_columns, plan_mapping
from ..errors import CapacityError, DomainError, InvariantError
from ..fp8 import Fp8Format, Fp8Tensor, int_table
from ..model import ActivationKind, ModelDescriptor, NormKind, tensor_key
from ..ternary import TernaryMatrix
from .lanes import Lanes
from .lora import LoraConfig, check_sram_budget
from .numerics import Accum, ReductionTree, add_exact, ternary_matvec
from .trace import token_trace
from .vu import vu_exp, vu_gelu, vu_layernorm, vu_reciprocal, vu_relu2, vu_rmsnorm, vu_rsqrt

EXP_FRAC_BITS = 30      # fixed-point precision of the softmax numerators


@dataclass(frozen=True, eq=False)
class LinearResult:
    acc: Accum              # exact pre-quantization result
    out: Fp8Tensor          # re-quantized output


def _lane_partial(wv: np.ndarray, x_ints: np.ndarray, placements, rows: int) -> np.ndarray:
    """Exact integer partial of one lane: the sum of its MVUs' chunk partials."""
    total = np.zeros(rows, np.int64)
    if not placements:
        return total
    c0, c1 = placements[0].col_start, placements[0].col_stop
    tc = c1 - c0
    if tc == 0:
        return total
    prods = (wv[:, c0:c1].astype(np.int64) * x_ints[c0:c1]).ravel()
    for p in placements:
        if p.count == 0:
            continue
        r0, r1 = p.row_range
        cuts = [0] + [r * tc - p.elem_start for r in range(r0 + 1, r1)]
        mvu_rows = np.add.reduceat(prods[p.elem_start:p.elem_stop], cuts)
        total[r0:r1] += mvu_rows
    return total


def linear_lane_partials(plan: MappingPlan, layer: int, name: str, w: TernaryMatrix, x: Fp8Tensor,
                         values: np.ndarray | None = None) -> list[Accum]:
    """Per-lane exact partials of ``W @ x`` following the mapping plan."""
    rows, cols = plan.model.tensor_shape(name)
    if (w.rows, w.cols) != (rows, cols):
        raise DomainError(f"tensor {tensor_key(layer, name)} is {w.rows}x{w.cols}, plan expects {rows}x{cols}")
    if len(x) != cols:
        raise DomainError(f"dimension mismatch: {tensor_key(layer, name)} takes {cols} inputs, got {len(x)}")
    placements = plan.placements_for(layer, name)
    if not placements:
        raise DomainError(f"plan has no placement for {tensor_key(layer, name)}")
    wv = w.values() if values is None else values
    x_ints = x.ints().astype(np.int64)
    by_lane = [[] for _ in range(plan.hw.num_lanes)]
    for p in placements:
        by_lane[p.lane].append(p)
    return [Accum(_lane_partial(wv, x_ints, ps, rows), x.int_exp, w.scale) for ps in by_lane]


def run_linear(plan: MappingPlan, layer: int, name: str, w: TernaryMatrix, x: Fp8Tensor,
               values: np.ndarray | None = None) -> LinearResult:
    parts = linear_lane_partials(plan, layer, name, w, x, values)
    acc = ReductionTree(plan.hw.num_lanes, plan.hw.reduction_tree_latency_cycles).sum(parts)
    return LinearResult(acc, Fp8Tensor.from_float(acc.values(), plan.hw.fmt))


def lane_gemv(values: np.ndarray, x_ints: np.ndarray, int_exp: int, scale: float, num_lanes: int) -> Accum:
    """Ternary GEMV with the input dimension tiled over lanes and tree-reduced (used for adapters)."""
    values = np.asarray(values)
    parts = []
    for c0, c1 in lane_columns(values.shape[1], num_lanes):
        parts.append(ternary_matvec(values[:, c0:c1], np.asarray(x_ints)[c0:c1], int_exp, scale))
    return ReductionTree(num_lanes).sum(parts)


def run_lora(h_base: Accum, x: Fp8Tensor, lora: LoraConfig, layer: int, name: str, num_lanes: int) -> np.ndarray:
    """``h_base + s * B (A x)``; with no adapter for this tensor the base values are returned unchanged."""
    base = h_base.values()
    if not lora.applies(name):
        return base
    ad = lora.adapter(layer, name)
    if ad is None:
        return base
    a, b = ad
    if a.cols != len(x) or b.rows != len(h_base) or a.rows != b.cols:
        raise DomainError(f"adapter shapes {a.shape}/{b.shape} do not match {tensor_key(layer, name)}")
    ax = lane_gemv(a.values(), x.ints(), x.int_exp, a.scale, num_lanes)
    bax = lane_gemv(b.values(), ax.ints, ax.exp, a.scale * b.scale, num_lanes)
    return base + lora.scale * bax.values()


# -- attention -----------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class AttentionResult:
    values: np.ndarray      # pre-quantization output (num_heads * head_dim)
    out: Fp8Tensor
    global_max: np.ndarray
    denominator: np.ndarray


def run_attention(q: Fp8Tensor, layer: int, lanes: Lanes, context_len: int, num_heads: int, head_dim: int,
                  num_kv_heads: int | None = None) -> AttentionResult:
    hw = lanes.hw
    kvh = num_heads if num_kv_heads is None else num_kv_heads
    if context_len > hw.max_context:
        raise CapacityError(f"context {context_len} exceeds max_context {hw.max_context}")
    if context_len < 1:
        raise DomainError("attention needs at least one cached position")
    if len(q) != num_heads * head_dim:
        raise DomainError(f"query length {len(q)} != {num_heads} heads x {head_dim}")
    if num_heads % kvh or lanes.kv_dim != kvh * head_dim:
        raise DomainError("head configuration does not match the KV cache")
    group = num_heads // kvh
    fmt = q.fmt
    table = int_table(fmt).astype(np.int64)
    frac = fmt.frac_bits
    qi = q.ints().astype(np.int64).reshape(num_heads, head_dim)
    inv_sqrt = float(vu_rsqrt(float(head_dim)))
    head_kv = np.arange(num_heads) // group
    m_lanes = lanes.num_lanes
    tree = ReductionTree(m_lanes, hw.reduction_tree_latency_cycles)

    # Step 0: local scores and local max
    local = []
    seen = 0
    for lane in range(m_lanes):
        pos, kc, ke, vc, ve = lanes.lane_kv(lane, layer)
        keep = pos < context_len
        pos, kc, ke, vc, ve = pos[keep], kc[keep], ke[keep], vc[keep], ve[keep]
        seen += len(pos)
        ki = table[kc].reshape(len(pos), kvh, head_dim)
        s_int = np.einsum("phd,hd->ph", ki[:, head_kv, :], qi)          # exact: < 2**53
        s = np.ldexp(s_int.astype(np.float64), (ke - frac + q.int_exp)[:, None]) * inv_sqrt
        lmax = s.max(axis=0) if len(pos) else np.full(num_heads, -np.inf)
        local.append((s, lmax, vc, ve))
    if seen != context_len:
        raise InvariantError(f"KV cache holds {seen} of {context_len} positions for layer {layer}")

    # Step 1: global max
    gmax = tree.max([lm for _, lm, _, _ in local])

    # Step 2: exponentials and global denominator
    numer_parts, denom_parts = [], []
    for s, _, vc, ve in local:
        e = vu_exp(s - gmax) if len(s) else np.zeros((0, num_heads))
        e_int = np.rint(np.ldexp(e, EXP_FRAC_BITS)).astype(np.int64)
        denom_parts.append(e_int.sum(axis=0))
        # Step 3: local weighted value sums, grouped by the V vectors' scale exponents
        acc = Accum(np.zeros(num_heads * head_dim, np.int64), 0)
        if len(ve):
            vi = table[vc].reshape(len(ve), kvh, head_dim)
            for u in np.unique(ve):
                sel = ve == u
                ints = np.einsum("ph,phd->hd", e_int[sel], vi[sel][:, head_kv, :]).ravel()
                acc = add_exact(acc, Accum(ints, int(u) - frac - EXP_FRAC_BITS))
        numer_parts.append(acc)
    denom = tree.sum(denom_parts)

    # Step 4: global numerator and normalization
    numer = tree.sum(numer_parts)
    recip = vu_reciprocal(np.ldexp(denom.astype(np.float64), -EXP_FRAC_BITS))
    vals = numer.values() * np.repeat(recip, head_dim)
    return AttentionResult(vals, Fp8Tensor.from_float(vals, fmt), gmax, denom)


# -- full decoder step -------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class TokenResult:
    position: int
    hidden: np.ndarray              # final-norm output (float64)
    logits: np.ndarray | None
    next_token: int | None
    trace: list = field(repr=False, default_factory=list)


def _norm(model: ModelDescriptor, x: Fp8Tensor) -> np.ndarray:
    if model.norm_kind == NormKind.RMSNORM:
        return vu_rmsnorm(x.ints(), x.int_exp)
    return vu_layernorm(x.ints(), x.int_exp)


def _act(model: ModelDescriptor, v: np.ndarray) -> np.ndarray:
    return vu_relu2(v) if model.activation_kind == ActivationKind.RELU2 else vu_gelu(v)


def greedy_token(logits: np.ndarray) -> int:
    """Argmax with ties resolved to the lowest id."""
    return int(np.argmax(logits))


class Engine:
    """Runs a model with weights token by token on a mapped accelerator."""

    def __init__(self, model: ModelDescriptor, hw: HardwareConfig | None = None, plan: MappingPlan | None = None,
                 lora: LoraConfig | None = None, sram_bytes: int | None = None):
        if not model.has_weights:
            raise DomainError("functional simulation needs a model with weights")
        model.validate_tensors()
        self.model = model
        self.plan = plan or plan_mapping(model, hw or HardwareConfig())
        self.hw = self.plan.hw
        self.lora = lora or LoraConfig()
        self.sram_bytes = (self.hw.total_kv_bytes + self.lora.total_bytes(model)) if sram_bytes is None \
            else sram_bytes
        check_sram_budget(self.lora, model, model.kv_bytes_per_token() * self.hw.max_context, self.sram_bytes)
        self.lanes = Lanes(self.plan)
        self.position = 0
        self._values = {}

    @property
    def fmt(self) -> Fp8Format:
        return self.hw.fmt

    def _w(self, layer: int, name: str):
        key = tensor_key(layer, name)
        if key not in self._values:
            self._values[key] = self.model.tensor(layer, name).values()
        return self.model.tensor(layer, name), self._values[key]

    def _linear(self, layer: int, name: str, x: Fp8Tensor) -> Fp8Tensor:
        w, wv = self._w(layer, name)
        res = run_linear(self.plan, layer, name, w, x, wv)
        if not self.lora.applies(name):
            return res.out
        return Fp8Tensor.from_float(run_lora(res.acc, x, self.lora, layer, name, self.hw.num_lanes), self.fmt)

    def embed(self, token: int) -> Fp8Tensor:
        emb = self.model.embed
        if emb is None:
            raise DomainError("model has no embedding table; pass a hidden vector instead")
        if not 0 <= token < emb.rows:
            raise DomainError(f"token id {token} out of range [0, {emb.rows})")
        return Fp8Tensor.from_float(emb.values()[token].astype(np.float64) * emb.scale, self.fmt)

    def step(self, token_input) -> TokenResult:
        """One decoder step: a token id, or an input hidden vector (anything :class:`Fp8Tensor` can hold)."""
        model = self.model
        pos = self.position
        if pos >= self.hw.max_context:
            raise CapacityError(f"context is full: {pos} positions cached, max_context {self.hw.max_context}. "
                                f"Raise max_context or start a new sequence.")
        if isinstance(token_input, (int, np.integer)):
            x = self.embed(int(token_input))
        elif isinstance(token_input, Fp8Tensor):
            x = token_input
        else:
            x = Fp8Tensor.from_float(np.asarray(token_input, dtype=np.float64), self.fmt)
        if len(x) != model.hidden_dim:
            raise DomainError(f"input length {len(x)} != hidden_dim {model.hidden_dim}")
        fmt = self.fmt
        for layer in range(model.num_layers):
            h = Fp8Tensor.from_float(_norm(model, x), fmt)
            q = self._linear(layer, "Wq", h)
            k = self._linear(layer, "Wk", h)
            v = self._linear(layer, "Wv", h)
            self.lanes.append_kv(layer, pos, k, v)
            att = run_attention(q, layer, self.lanes, pos + 1, model.num_heads, model.head_dim,
                                model.num_kv_heads).out
            o = self._linear(layer, "Wo", att)
            x = Fp8Tensor.from_float(x.values() + o.values(), fmt)
            h = Fp8Tensor.from_float(_norm(model, x), fmt)
            up = self._linear(layer, "W_ffn_up", h)
            if model.gated_ffn:
                gate = self._linear(layer, "W_ffn_gate", h)
                a = Fp8Tensor.from_float(_act(model, gate.values()) * up.values(), fmt)
            else:
                a = Fp8Tensor.from_float(_act(model, up.values()), fmt)
            d = self._linear(layer, "W_ffn_down", a)
            x = Fp8Tensor.from_float(x.values() + d.values(), fmt)
        hidden = _norm(model, x) if model.num_layers else x.values()
        self.position = pos + 1
        logits, nxt = None, None
        emb = model.embed
        if emb is not None:
            logits = (emb.values().astype(np.float64) @ hidden) * emb.scale
            nxt = greedy_token(logits)
        return TokenResult(pos, hidden, logits, nxt, token_trace(model, pos + 1, self.lora))

    def generate(self, prompt, n_generate: int) -> tuple[list[int], list[TokenResult]]:
        """Feed the prompt token by token, then decode ``n_generate`` tokens greedily."""
        prompt = [int(t) for t in prompt]
        if not prompt:
            raise DomainError("prompt must contain at least one token")
        if n_generate < 0:
            raise DomainError("n_generate must be >= 0")
        need = len(prompt) + max(n_generate - 1, 0)
        if need > self.hw.max_context - self.position:
            raise CapacityError(f"sequence needs {need} positions but only "
                                f"{self.hw.max_context - self.position} remain (max_context {self.hw.max_context})")
        results = [self.step(t) for t in prompt]
        out = []
        for i in range(n_generate):
            tok = results[-1].next_token
            out.append(tok)
            if i + 1 < n_generate:
                results.append(self.step(tok))
        return out, results

    def snapshot(self) -> "Engine":
        """Independent copy of the engine state (cache and position) for replay."""
        other = object.__new__(Engine)
        other.__dict__.update(self.__dict__)
        other.lanes = self.lanes.snapshot()
        return other


def run_token(engine: Engine, token_input) -> TokenResult:
    return engine.step(token_input)

