"""Execution traces: the event stream the timing and power models consume.

A token's trace depends only on the model shape, the hardware config, the
current context length and the LoRA targets. The functional simulator emits
the same events through :func:`token_trace`, so shape-only models can be
timed without running any arithmetic.

Event kinds and their cost keys:

    gemv          rows, cols                 ternary GEMV over the lane-tiled tensor
    reduce        len, op                    global reduction tree pass
    vu            op, len                    vector-unit elementwise work (len = full vector)
    attn_scores   ctx, hd                    per-head q.k over the lane's positions
    attn_values   ctx, hd                    per-head sum of e_p * v_p

Phases: QKV, AS, AV, O, FFN, VU, reduction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..errors import DomainError
from ..model import ActivationKind, ModelDescriptor, NormKind

PHASES = ("QKV", "AS", "AV", "O", "FFN", "VU", "reduction")
KINDS = ("gemv", "reduce", "vu", "attn_scores", "attn_values")

TENSOR_PHASE = {"Wq": "QKV", "Wk": "QKV", "Wv": "QKV", "Wo": "O",
                "W_ffn_up": "FFN", "W_ffn_gate": "FFN", "W_ffn_down": "FFN"}


@dataclass(frozen=True)
class TraceEvent:
    kind: str
    phase: str
    layer: int
    key: dict = field(default_factory=dict)
    lane: int = -1          # -1: all lanes in lock-step

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown trace event kind {self.kind!r}")
        if self.phase not in PHASES:
            raise DomainError(f"unknown trace phase {self.phase!r}")

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "phase": self.phase, "layer": self.layer, "lane": self.lane,
                           "key": self.key}, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "TraceEvent":
        d = json.loads(line)
        return cls(d["kind"], d["phase"], int(d["layer"]), dict(d["key"]), int(d.get("lane", -1)))


def dump_trace(events) -> str:
    return "".join(e.to_json() + "\n" for e in events)


def load_trace(text: str) -> list[TraceEvent]:
    out = []
    for i, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            try:
                out.append(TraceEvent.from_json(line))
            except (ValueError, KeyError, TypeError) as e:
                raise DomainError(f"malformed trace line {i}: {e}") from None
    return out


class TraceBuilder:
    def __init__(self):
        self.events: list[TraceEvent] = []

    def gemv(self, phase, layer, rows, cols, tensor):
        self.events.append(TraceEvent("gemv", phase, layer, {"rows": rows, "cols": cols, "tensor": tensor}))

    def reduce(self, phase, layer, length, op="sum"):
        self.events.append(TraceEvent("reduce", phase, layer, {"len": length, "op": op}))

    def vu(self, phase, layer, op, length):
        self.events.append(TraceEvent("vu", phase, layer, {"op": op, "len": length}))

    def attn(self, kind, phase, layer, ctx, hd):
        self.events.append(TraceEvent(kind, phase, layer, {"ctx": ctx, "hd": hd}))


def _linear(tb: TraceBuilder, model: ModelDescriptor, layer: int, name: str, lora):
    rows, cols = model.tensor_shape(name)
    phase = TENSOR_PHASE[name]
    tb.gemv(phase, layer, rows, cols, name)
    tb.reduce("reduction", layer, rows)
    if lora is not None and lora.applies(name):
        r = lora.rank
        tb.gemv(phase, layer, r, cols, f"{name}.lora_A")
        tb.reduce("reduction", layer, r)
        tb.gemv(phase, layer, rows, r, f"{name}.lora_B")
        tb.reduce("reduction", layer, rows)
        tb.vu(phase, layer, "add", rows)


def _norm(tb: TraceBuilder, model: ModelDescriptor, layer: int):
    tb.vu("VU", layer, "norm", model.hidden_dim)
    tb.reduce("reduction", layer, 2 if model.norm_kind == NormKind.LAYERNORM else 1)


def token_trace(model: ModelDescriptor, context_len: int, lora=None) -> list[TraceEvent]:
    """Events for one decoder step with ``context_len`` cached positions (including the new one)."""
    if context_len < 1 and model.num_layers:
        raise DomainError("context length must be >= 1")
    tb = TraceBuilder()
    hd = model.head_dim
    for layer in range(model.num_layers):
        _norm(tb, model, layer)
        for name in ("Wq", "Wk", "Wv"):
            _linear(tb, model, layer, name, lora)
        for _head in range(model.num_heads):
            tb.attn("attn_scores", "AS", layer, context_len, hd)
            tb.reduce("AS", layer, 1, "max")
            tb.vu("AS", layer, "exp", context_len)
            tb.reduce("AS", layer, 1, "sum")
            tb.attn("attn_values", "AV", layer, context_len, hd)
            tb.reduce("AV", layer, hd, "sum")
            tb.vu("AV", layer, "div", hd)
        _linear(tb, model, layer, "Wo", lora)
        tb.vu("VU", layer, "add", model.hidden_dim)
        _norm(tb, model, layer)
        _linear(tb, model, layer, "W_ffn_up", lora)
        act = "relu2" if model.activation_kind == ActivationKind.RELU2 else "gelu"
        if model.gated_ffn:
            _linear(tb, model, layer, "W_ffn_gate", lora)
            tb.vu("VU", layer, act, model.ffn_dim)
            tb.vu("VU", layer, "mul", model.ffn_dim)
        else:
            tb.vu("VU", layer, act, model.ffn_dim)
        _linear(tb, model, layer, "W_ffn_down", lora)
        tb.vu("VU", layer, "add", model.hidden_dim)
    if model.num_layers:
        _norm(tb, model, -1)
    return tb.events
