"""Placement of model tensors onto lanes, MVUs and ROM banks.

Linear weights are tiled along the input dimension:

* Each lane receives a contiguous, near-even range of input columns.
* Inside a lane, the (rows x lane_cols) tile is flattened row-major. It is
  cut into ``N`` contiguous, near-even element chunks, one per MVU. When the
  split is uneven, the MVUs that take the extra elements rotate from tensor
  to tensor, so no MVU accumulates the imbalance.
* Each MVU lays its chunks for one layer, in canonical tensor order, into a
  stream of ``bank_width``-bit words. Every layer starts a fresh bank, so
  power gating can switch layers independently. A bank holds
  ``bank_height`` words; the last bank of a layer may be shorter.

The KV cache is tiled across the context. Position ``p`` lives in lane
``p mod M``, and dimension ``d`` of a K/V vector lives in MVU ``d mod N``
of that lane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import CapacityError, DomainError
from ..model import ModelDescriptor
from .config import HardwareConfig


def even_splits(n: int, parts: int, rotate: int = 0) -> list[int]:
    """Sizes of ``parts`` contiguous pieces of ``n``; the ``n % parts`` larger
    pieces start at index ``rotate`` (cyclically)."""
    base, rem = divmod(n, parts)
    return [base + (1 if (i - rotate) % parts < rem else 0) for i in range(parts)]


def lane_columns(cols: int, lanes: int) -> list[tuple[int, int]]:
    sizes = even_splits(cols, lanes)
    bounds = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    return [(int(bounds[i]), int(bounds[i + 1])) for i in range(lanes)]


@dataclass(frozen=True)
class Placement:
    """One MVU's share of one tensor.

    ``elem_start:elem_stop`` indexes the row-major flattening of the lane tile
    ``W[:, col_start:col_stop]``. ``stream_start`` is where this chunk begins
    (in weights) inside the MVU's per-layer word stream.
    """

    layer: int
    name: str
    lane: int
    mvu: int
    col_start: int
    col_stop: int
    elem_start: int
    elem_stop: int
    stream_start: int
    banks: tuple = ()

    @property
    def tile_cols(self) -> int:
        return self.col_stop - self.col_start

    @property
    def count(self) -> int:
        return self.elem_stop - self.elem_start

    @property
    def row_range(self) -> tuple[int, int]:
        if self.count == 0 or self.tile_cols == 0:
            return (0, 0)
        return (self.elem_start // self.tile_cols, (self.elem_stop - 1) // self.tile_cols + 1)

    @property
    def col_range(self) -> tuple[int, int]:
        return (self.col_start, self.col_stop)


@dataclass(frozen=True)
class BankInfo:
    bank_id: int
    lane: int
    mvu: int
    layer: int
    index: int
    words: int
    weights: int

    @property
    def bits(self) -> int:
        return self.weights * 2


@dataclass(frozen=True, eq=False)
class MappingPlan:
    hw: HardwareConfig
    model: ModelDescriptor
    placements: tuple
    banks: tuple
    mvu_weight_bits: np.ndarray = field(repr=False)   # (M, N) bits used
    layer_banks: tuple = field(repr=False, default=())

    # -- queries ------------------------------------------------------------
    def placements_for(self, layer: int, name: str) -> list[Placement]:
        return [p for p in self._index().get((layer, name), [])]

    def _index(self) -> dict:
        idx = self.__dict__.get("_placement_index")
        if idx is None:
            idx = {}
            for p in self.placements:
                idx.setdefault((p.layer, p.name), []).append(p)
            object.__setattr__(self, "_placement_index", idx)
        return idx

    def lanes_used(self) -> set[int]:
        return {p.lane for p in self.placements if p.count > 0}

    @property
    def occupied_banks(self) -> frozenset:
        return frozenset(b.bank_id for b in self.banks)

    def kv_lane(self, position: int) -> int:
        return position % self.hw.num_lanes

    def kv_mvu(self, dim: int) -> int:
        return dim % self.hw.mvus_per_lane

    def kv_positions_in_lane(self, lane: int, context: int) -> int:
        m = self.hw.num_lanes
        return context // m + (1 if lane < context % m else 0)

    def kv_dims_in_mvu(self, mvu: int) -> int:
        n = self.hw.mvus_per_lane
        kv = self.model.kv_dim
        return kv // n + (1 if mvu < kv % n else 0)

    def kv_bytes(self, lane: int, mvu: int, context: int) -> int:
        """KV-cache bytes held by one MVU at a given context length (K and V, all layers)."""
        return self.model.num_layers * 2 * self.kv_positions_in_lane(lane, context) * self.kv_dims_in_mvu(mvu)

    def max_kv_bytes_per_mvu(self, context: int | None = None) -> int:
        ctx = self.hw.max_context if context is None else context
        return self.kv_bytes(0, 0, ctx)

    @property
    def rom_bits_used(self) -> int:
        return int(self.mvu_weight_bits.sum())


def banks_for_layer(plan: MappingPlan, layer: int) -> frozenset:
    if not 0 <= layer < plan.model.num_layers:
        raise DomainError(f"layer {layer} out of range [0, {plan.model.num_layers})")
    return plan.layer_banks[layer]


def plan_mapping(model: ModelDescriptor, hw: HardwareConfig) -> MappingPlan:
    """Place every linear tensor and check ROM and KV capacity. Pure and deterministic."""
    m_lanes, n_mvus = hw.num_lanes, hw.mvus_per_lane
    per_word = hw.bank_words_weights
    placements: list[Placement] = []
    banks: list[BankInfo] = []
    layer_banks = []
    used_bits = np.zeros((m_lanes, n_mvus), np.int64)
    cap_bits = hw.mvu_weight_capacity_bytes * 8
    first_overflow = None

    for layer in range(model.num_layers):
        stream = np.zeros((m_lanes, n_mvus), np.int64)
        rotation = np.zeros(m_lanes, np.int64)
        layer_placements = []
        for name in model.layer_tensor_names():
            rows, cols = model.tensor_shape(name)
            for lane, (c0, c1) in enumerate(lane_columns(cols, m_lanes)):
                n = rows * (c1 - c0)
                rot = int(rotation[lane])
                sizes = even_splits(n, n_mvus, rot)
                rotation[lane] = (rot + n % n_mvus) % n_mvus
                start = 0
                for mvu, size in enumerate(sizes):
                    layer_placements.append(Placement(layer, name, lane, mvu, c0, c1, start, start + size,
                                                      int(stream[lane, mvu])))
                    stream[lane, mvu] += size
                    start += size
                    used_bits[lane, mvu] += 2 * size
            if first_overflow is None and np.any(used_bits > cap_bits):
                first_overflow = f"layers.{layer}.{name}"

        # cut each MVU's layer stream into banks
        bank_of = {}
        ids = set()
        for lane in range(m_lanes):
            for mvu in range(n_mvus):
                s = int(stream[lane, mvu])
                words = math.ceil(s / per_word)
                ranges = []
                for k in range(math.ceil(words / hw.bank_height)):
                    w = min(hw.bank_height, words - k * hw.bank_height)
                    weights = min(w * per_word, s - k * hw.bank_height * per_word)
                    b = BankInfo(len(banks), lane, mvu, layer, k, w, weights)
                    banks.append(b)
                    ids.add(b.bank_id)
                    ranges.append((k * hw.bank_height * per_word, b.bank_id))
                bank_of[(lane, mvu)] = ranges
        for p in layer_placements:
            ranges = bank_of[(p.lane, p.mvu)]
            span = (p.stream_start, p.stream_start + p.count)
            hit = tuple(bid for i, (off, bid) in enumerate(ranges)
                        if p.count and off < span[1]
                        and (i + 1 == len(ranges) or ranges[i + 1][0] > span[0]))
            placements.append(Placement(**{**p.__dict__, "banks": hit}))
        layer_banks.append(frozenset(ids))

    if first_overflow is not None:
        excess_bits = int(np.maximum(used_bits - cap_bits, 0).sum())
        raise CapacityError(
            f"ROM capacity exceeded: tensor {first_overflow} is the first that does not fit; "
            f"shortfall {math.ceil(excess_bits / 8)} bytes "
            f"(model needs {model.total_weight_bytes()} B, hardware holds {hw.total_rom_bytes} B). "
            f"Increase mvu_weight_capacity_bytes or the lane/MVU count.")

    plan = MappingPlan(hw, model.shape_only() if model.has_weights else model, tuple(placements), tuple(banks),
                       used_bits, tuple(layer_banks))
    kv_need = plan.max_kv_bytes_per_mvu()
    if kv_need > hw.kv_cache_bytes_per_mvu:
        raise CapacityError(
            f"KV cache exceeded: {kv_need} B per MVU needed at context {hw.max_context}, "
            f"{hw.kv_cache_bytes_per_mvu} B available; shortfall {kv_need - hw.kv_cache_bytes_per_mvu} bytes. "
            f"Lower max_context or enlarge kv_cache_bytes_per_mvu.")
    return plan


def mvu_stream_codes(plan: MappingPlan, model: ModelDescriptor, layer: int, lane: int, mvu: int) -> np.ndarray:
    """The 2-bit code stream one MVU stores for one layer (needs a model with weights)."""
    parts = []
    for name in model.layer_tensor_names():
        for p in plan.placements_for(layer, name):
            if p.lane != lane or p.mvu != mvu:
                continue
            w = model.tensor(layer, name)
            tile = w.codes().reshape(w.rows, w.cols)[:, p.col_start:p.col_stop].ravel()
            parts.append(tile[p.elem_start:p.elem_stop])
    return np.concatenate(parts) if parts else np.zeros(0, np.uint8)


def bank_codes(plan: MappingPlan, model: ModelDescriptor, bank: BankInfo) -> np.ndarray:
    stream = mvu_stream_codes(plan, model, bank.layer, bank.lane, bank.mvu)
    start = bank.index * plan.hw.bank_height * plan.hw.bank_words_weights
    return stream[start:start + bank.weights]
