"""Ternary LoRA adapters executed as a second pass on the GEMV units.

``h = W x + s * B (A x)``. ``A`` is (rank x in) and ``B`` is (out x rank),
both ternary with their own scales. Adapters live in SRAM alongside the KV
cache.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import CapacityError, DomainError, FormatError
from ..model import ModelDescriptor, tensor_key
from ..ternary import TernaryMatrix, random_ternary

LORA_TARGETS = {"Q": "Wq", "K": "Wk", "V": "Wv", "O": "Wo", "FFN-up": "W_ffn_up", "FFN-down": "W_ffn_down"}

PRESETS = {
    "none": (),
    "qv": ("Q", "V"),
    "qkvo": ("Q", "K", "V", "O"),
    "all": ("Q", "K", "V", "O", "FFN-up", "FFN-down"),
}


def _tensor_names(targets) -> frozenset:
    names = set()
    for t in targets:
        if t in LORA_TARGETS:
            names.add(LORA_TARGETS[t])
        elif t in LORA_TARGETS.values():
            names.add(t)
        else:
            raise DomainError(f"unknown LoRA target {t!r}; expected one of {sorted(LORA_TARGETS)}")
    return frozenset(names)


@dataclass(frozen=True)
class LoraConfig:
    rank: int = 0
    targets: frozenset = frozenset()
    scale: float = 1.0
    adapters: dict = field(default_factory=dict, compare=False, repr=False)   # key -> (A, B)

    def __post_init__(self):
        if self.rank < 0:
            raise DomainError("LoRA rank must be >= 0")
        object.__setattr__(self, "targets", _tensor_names(self.targets))

    @property
    def active(self) -> bool:
        return self.rank > 0 and bool(self.targets)

    def applies(self, name: str) -> bool:
        return self.active and name in self.targets

    def adapter(self, layer: int, name: str):
        return self.adapters.get(tensor_key(layer, name))

    def footprint_bytes(self, model: ModelDescriptor) -> dict:
        """SRAM bytes per adapter key (2-bit packed A and B)."""
        out = {}
        if not self.active:
            return out
        for layer in range(model.num_layers):
            for name in sorted(self.targets):
                rows, cols = model.tensor_shape(name)
                out[tensor_key(layer, name)] = (self.rank * cols * 2 + 7) // 8 + (rows * self.rank * 2 + 7) // 8
        return out

    def total_bytes(self, model: ModelDescriptor) -> int:
        return sum(self.footprint_bytes(model).values())


def check_sram_budget(lora: LoraConfig, model: ModelDescriptor, kv_bytes: int, sram_bytes: int):
    fp = lora.footprint_bytes(model)
    need = sum(fp.values()) + kv_bytes
    if need > sram_bytes:
        largest = sorted(fp.items(), key=lambda kv: -kv[1])[:3]
        raise CapacityError(
            f"SRAM budget exceeded: adapters {sum(fp.values())} B + KV cache {kv_bytes} B = {need} B "
            f"> {sram_bytes} B available (largest adapters: {largest}). "
            f"Lower the LoRA rank, target fewer tensors or reduce max_context.")


def make_lora(model: ModelDescriptor, rank: int, targets, seed: int = 0, zero_value_ratio: float = 0.5,
              scale: float = 1.0, zero_b: bool = False) -> LoraConfig:
    """Seeded random ternary adapters for every targeted tensor of every layer."""
    names = _tensor_names(targets)
    rng = np.random.default_rng([seed, rank, 0x10A])
    adapters = {}
    if rank > 0:
        for layer in range(model.num_layers):
            for name in sorted(names):
                rows, cols = model.tensor_shape(name)
                a = random_ternary(rng, rank, cols, zero_value_ratio)
                b = TernaryMatrix.zeros(rows, rank) if zero_b else random_ternary(rng, rows, rank, zero_value_ratio)
                adapters[tensor_key(layer, name)] = (a, b)
    return LoraConfig(rank, names, scale, adapters)


def load_lora_config(path, model: ModelDescriptor, seed: int = 0) -> LoraConfig:
    """Read ``{"rank": r, "targets": [...], "scale": s, "zero_value_ratio": z}``; adapters come from the seed."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"LoRA config not found: {path}")
    try:
        with open(path) as f:
            d = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON: {e.msg}", offset=e.pos) from None
    unknown = set(d) - {"rank", "targets", "scale", "zero_value_ratio"}
    if unknown:
        raise FormatError(f"{path}: unknown LoRA keys {sorted(unknown)}")
    targets = d.get("targets", [])
    if isinstance(targets, str):
        targets = PRESETS.get(targets.lower(), (targets,))
    return make_lora(model, int(d.get("rank", 0)), targets, seed, float(d.get("zero_value_ratio", 0.5)),
                     float(d.get("scale", 1.0)))
