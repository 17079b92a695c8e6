"""Per-lane state: the KV-cache slices held by each lane's MVUs.

Position ``p`` of the context lives in lane ``p mod M``. Inside that lane,
dimension ``d`` of every K/V vector is held by MVU ``d mod N``. Each cached
K or V vector is an FP8 vector carrying its own power-of-two scale.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..arch.mapping import MappingPlan
from ..errors import CapacityError, InvariantError
from ..fp8 import Fp8Tensor


@dataclass
class LayerKV:
    """K/V rows of one layer held by one lane, in position order."""

    positions: list = field(default_factory=list)
    k_codes: list = field(default_factory=list)
    k_exps: list = field(default_factory=list)
    v_codes: list = field(default_factory=list)
    v_exps: list = field(default_factory=list)

    def __len__(self):
        return len(self.positions)


@dataclass
class LaneState:
    lane: int
    num_mvus: int
    kv: dict = field(default_factory=dict)   # layer -> LayerKV

    def layer(self, layer: int) -> LayerKV:
        return self.kv.setdefault(layer, LayerKV())

    def positions(self, layer: int) -> int:
        return len(self.kv.get(layer, ()))

    def mvu_kv_bytes(self, mvu: int, kv_dim: int) -> int:
        """Bytes of K and V held by one MVU over all layers (one byte per FP8 element)."""
        dims = kv_dim // self.num_mvus + (1 if mvu < kv_dim % self.num_mvus else 0)
        return sum(2 * len(lk) * dims for lk in self.kv.values())


class Lanes:
    """All lanes of the accelerator plus the shared context position counter."""

    def __init__(self, plan: MappingPlan):
        self.plan = plan
        self.hw = plan.hw
        self.kv_dim = plan.model.kv_dim
        self.states = [LaneState(i, self.hw.mvus_per_lane) for i in range(self.hw.num_lanes)]
        self.context = 0     # positions appended so far in the last layer written

    @property
    def num_lanes(self) -> int:
        return len(self.states)

    def append_kv(self, layer: int, position: int, k: Fp8Tensor, v: Fp8Tensor):
        """Store one position's K and V for one layer; append-only."""
        if position >= self.hw.max_context:
            raise CapacityError(
                f"context overflow: position {position} exceeds max_context {self.hw.max_context}. "
                f"Raise max_context (and KV capacity) or shorten the prompt.")
        if len(k) != self.kv_dim or len(v) != self.kv_dim:
            raise InvariantError(f"K/V length {len(k)}/{len(v)} != kv_dim {self.kv_dim}")
        cached = sum(len(s.layer(layer)) for s in self.states)
        if position != cached:
            raise InvariantError(f"KV cache is append-only: layer {layer} holds {cached} positions, "
                                 f"cannot write position {position}")
        st = self.states[self.plan.kv_lane(position)]
        lk = st.layer(layer)
        lk.positions.append(position)
        lk.k_codes.append(k.codes)
        lk.k_exps.append(k.scale_exp)
        lk.v_codes.append(v.codes)
        lk.v_exps.append(v.scale_exp)
        cap = self.hw.kv_cache_bytes_per_mvu
        for mvu in range(st.num_mvus):
            used = st.mvu_kv_bytes(mvu, self.kv_dim)
            if used > cap:
                raise CapacityError(f"KV cache of lane {st.lane} MVU {mvu} needs {used} B > {cap} B; "
                                    f"shortfall {used - cap} bytes")

    def lane_kv(self, lane: int, layer: int):
        """(positions, K codes, K exps, V codes, V exps) as arrays for one lane and layer."""
        lk = self.states[lane].kv.get(layer)
        d = self.kv_dim
        if lk is None or not len(lk):
            empty = np.zeros((0, d), np.uint8)
            return np.zeros(0, np.int64), empty, np.zeros(0, np.int64), empty, np.zeros(0, np.int64)
        return (np.array(lk.positions, np.int64), np.stack(lk.k_codes), np.array(lk.k_exps, np.int64),
                np.stack(lk.v_codes), np.array(lk.v_exps, np.int64))

    def snapshot(self) -> "Lanes":
        """Independent copy of the cache (for replay)."""
        other = copy.copy(self)
        other.states = copy.deepcopy(self.states)
        return other
