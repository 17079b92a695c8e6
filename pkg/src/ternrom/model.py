"""Transformer model descriptors and the seeded toy-model generator."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping

import numpy as np

from .errors import DomainError
from .ternary import TernaryMatrix, combined_sparsity, random_ternary, SparsityStats


class NormKind(str, Enum):
    LAYERNORM = "layernorm"
    RMSNORM = "rmsnorm"


class ActivationKind(str, Enum):
    GELU = "gelu"
    RELU2 = "relu2"


CORE_TENSORS = ("Wq", "Wk", "Wv", "Wo", "W_ffn_up", "W_ffn_down")
GATE_TENSOR = "W_ffn_gate"
EMBED_TENSOR = "embed"


def tensor_key(layer: int, name: str) -> str:
    return f"layers.{layer}.{name}"


def split_key(key: str) -> tuple[int, str]:
    parts = key.split(".")
    if len(parts) != 3 or parts[0] != "layers":
        raise DomainError(f"not a layer tensor key: {key!r}")
    return int(parts[1]), parts[2]


@dataclass(frozen=True)
class ModelDescriptor:
    """Shape of a decoder-only transformer plus (optionally) its ternary weights.

    ``tensors`` maps ``layers.<i>.<name>`` (and optionally ``embed``) to
    matrices. A descriptor without tensors is "shape only": enough for
    mapping, timing, power and area, but not for functional simulation.

    Linear tensors are stored as (out_features, in_features).
    """

    num_layers: int
    hidden_dim: int
    ffn_dim: int
    num_heads: int
    head_dim: int
    num_kv_heads: int | None = None
    vocab_size: int = 0
    norm_kind: NormKind = NormKind.LAYERNORM
    activation_kind: ActivationKind = ActivationKind.GELU
    gated_ffn: bool = False
    tensors: Mapping[str, TernaryMatrix] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "norm_kind", NormKind(self.norm_kind))
        object.__setattr__(self, "activation_kind", ActivationKind(self.activation_kind))
        if self.num_kv_heads is None:
            object.__setattr__(self, "num_kv_heads", self.num_heads)
        for name in ("num_layers", "hidden_dim", "ffn_dim", "num_heads", "head_dim", "num_kv_heads", "vocab_size"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")
        if self.hidden_dim != self.num_heads * self.head_dim:
            raise DomainError(
                f"hidden_dim {self.hidden_dim} != num_heads {self.num_heads} * head_dim {self.head_dim}")
        if self.num_kv_heads and self.num_heads % self.num_kv_heads:
            raise DomainError("num_heads must be a multiple of num_kv_heads")
        object.__setattr__(self, "tensors", dict(self.tensors))
        if self.tensors:
            self.validate_tensors()

    # -- shapes -------------------------------------------------------------
    @property
    def kv_dim(self) -> int:
        return self.num_kv_heads * self.head_dim

    def layer_tensor_names(self) -> tuple[str, ...]:
        return CORE_TENSORS + ((GATE_TENSOR,) if self.gated_ffn else ())

    def tensor_shape(self, name: str) -> tuple[int, int]:
        h, f, kv = self.hidden_dim, self.ffn_dim, self.kv_dim
        shapes = {
            "Wq": (h, h), "Wk": (kv, h), "Wv": (kv, h), "Wo": (h, h),
            "W_ffn_up": (f, h), GATE_TENSOR: (f, h), "W_ffn_down": (h, f),
        }
        if name == EMBED_TENSOR:
            return (self.vocab_size, h)
        if name not in shapes:
            raise DomainError(f"unknown tensor name {name!r}")
        return shapes[name]

    def layer_shapes(self) -> dict[str, tuple[int, int]]:
        return {n: self.tensor_shape(n) for n in self.layer_tensor_names()}

    def iter_layer_tensors(self):
        """Yield ``(layer, name, (rows, cols))`` in canonical placement order."""
        for layer in range(self.num_layers):
            for name in self.layer_tensor_names():
                yield layer, name, self.tensor_shape(name)

    def weights_per_layer(self) -> int:
        return sum(r * c for r, c in self.layer_shapes().values())

    def total_weights(self) -> int:
        """Number of ternary weights in the linear layers (the ROM-resident part)."""
        return self.num_layers * self.weights_per_layer()

    def total_weight_bytes(self) -> int:
        return self.total_weights() * 2 // 8

    def kv_bytes_per_token(self, bytes_per_element: int = 1) -> int:
        return self.num_layers * 2 * self.kv_dim * bytes_per_element

    # -- weights ------------------------------------------------------------
    @property
    def has_weights(self) -> bool:
        return bool(self.tensors)

    def tensor(self, layer: int, name: str) -> TernaryMatrix:
        if not 0 <= layer < self.num_layers:
            raise DomainError(f"layer {layer} out of range [0, {self.num_layers})")
        try:
            return self.tensors[tensor_key(layer, name)]
        except KeyError:
            raise DomainError(f"model has no tensor {tensor_key(layer, name)!r}") from None

    @property
    def embed(self) -> TernaryMatrix | None:
        return self.tensors.get(EMBED_TENSOR)

    def validate_tensors(self):
        expected = {tensor_key(l, n) for l, n, _ in self.iter_layer_tensors()}
        extra = set(self.tensors) - expected - {EMBED_TENSOR}
        missing = expected - set(self.tensors)
        if missing:
            raise DomainError(f"missing tensors: {sorted(missing)[:4]}")
        if extra:
            raise DomainError(f"unexpected tensors: {sorted(extra)[:4]}")
        for key, m in self.tensors.items():
            name = key if key == EMBED_TENSOR else split_key(key)[1]
            if m.shape != self.tensor_shape(name):
                raise DomainError(f"{key} has shape {m.shape}, expected {self.tensor_shape(name)}")

    def sparsity(self) -> SparsityStats:
        return combined_sparsity({k: v for k, v in self.tensors.items() if k != EMBED_TENSOR})

    def shape_only(self) -> "ModelDescriptor":
        return replace(self, tensors={})

    def with_layers(self, num_layers: int) -> "ModelDescriptor":
        """Shape-only copy with a different depth (used by scaling studies)."""
        return replace(self, num_layers=num_layers, tensors={})


def bitnet_2b() -> ModelDescriptor:
    """Shape of the 2B-parameter BitNet b1.58 model (weights not included)."""
    return ModelDescriptor(
        num_layers=30, hidden_dim=2560, ffn_dim=6912, num_heads=20, head_dim=128,
        num_kv_heads=5, vocab_size=128256, norm_kind=NormKind.RMSNORM,
        activation_kind=ActivationKind.RELU2, gated_ffn=True,
    )


def make_toy_model(seed: int = 0, num_layers: int = 4, hidden_dim: int = 256, ffn_dim: int = 704,
                   num_heads: int = 4, num_kv_heads: int | None = None, vocab_size: int = 256,
                   zero_value_ratio: float = 0.4, norm_kind=NormKind.LAYERNORM,
                   activation_kind=ActivationKind.GELU, gated_ffn: bool = False,
                   with_embedding: bool = True) -> ModelDescriptor:
    """Seeded random ternary model; every tensor gets i.i.d. weights at the given zero ratio."""
    if num_heads <= 0 or hidden_dim % num_heads:
        raise DomainError("hidden_dim must be a positive multiple of num_heads")
    shape = ModelDescriptor(num_layers, hidden_dim, ffn_dim, num_heads, hidden_dim // num_heads,
                            num_kv_heads, vocab_size, norm_kind, activation_kind, gated_ffn)
    rng = np.random.default_rng(seed)
    tensors = {}
    for layer, name, (rows, cols) in shape.iter_layer_tensors():
        tensors[tensor_key(layer, name)] = random_ternary(rng, rows, cols, zero_value_ratio)
    if with_embedding and vocab_size:
        tensors[EMBED_TENSOR] = random_ternary(rng, vocab_size, hidden_dim, zero_value_ratio, scale=1.0)
    return replace(shape, tensors=tensors)
