"""Cycle-approximate timing model.

All lanes work in lock-step between reduction barriers. A token's latency
is therefore the sum of its events' critical-path cycles:

    gemv         G  + ceil( ceil(rows * ceil(cols / M) / N) / macs )
    reduce       T  + ceil(len / W_tree)
    vu           V  + c_op * ceil( ceil(len / M) / K )     (x (1 - overlap) in the VU phase)
    attn_*       Ga + ceil( ceil(ctx / M) * ceil(hd / N) / attn_macs )

G, Ga, T and V are pipeline fill latencies. M is the number of lanes, N
the MVUs per lane and K the VU width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..arch.config import HardwareConfig
from ..errors import DomainError
from ..sim.trace import PHASES, TraceEvent

_ceil = math.ceil


def event_cycles(ev: TraceEvent, hw: HardwareConfig) -> float:
    k = ev.key
    m, n = hw.num_lanes, hw.mvus_per_lane
    try:
        if ev.kind == "gemv":
            per_mvu = _ceil(k["rows"] * _ceil(k["cols"] / m) / n)
            return hw.gemv_pipeline_cycles + _ceil(per_mvu / hw.mvu_macs_per_cycle)
        if ev.kind == "reduce":
            return hw.reduction_tree_latency_cycles + _ceil(k["len"] / hw.reduction_tree_width)
        if ev.kind == "vu":
            c = hw.vu_pipeline_cycles + hw.vu_cycles(k["op"]) * _ceil(_ceil(k["len"] / m) / hw.vector_unit_width)
            return c * (1.0 - hw.vu_overlap) if ev.phase == "VU" else float(c)
        if ev.kind in ("attn_scores", "attn_values"):
            work = _ceil(k["ctx"] / m) * _ceil(k["hd"] / n)
            return hw.attn_pipeline_cycles + _ceil(work / hw.attn_macs_per_cycle)
    except KeyError as e:
        raise DomainError(f"malformed trace event {ev.kind}: missing key {e.args[0]!r}") from None
    raise DomainError(f"unknown trace event kind {ev.kind!r}")


def event_macs(ev: TraceEvent) -> int:
    k = ev.key
    if ev.kind == "gemv":
        return k["rows"] * k["cols"]
    if ev.kind in ("attn_scores", "attn_values"):
        return k["ctx"] * k["hd"]
    return 0


def event_rom_bytes(ev: TraceEvent) -> float:
    """Weight bytes streamed out of ROM by an event (adapter GEMVs read SRAM instead)."""
    if ev.kind == "gemv" and ".lora_" not in ev.key.get("tensor", ""):
        return ev.key["rows"] * ev.key["cols"] * 2 / 8
    return 0.0


@dataclass(frozen=True)
class LatencyBreakdown:
    cycles_by_phase: dict = field(default_factory=dict)
    cycles_by_layer: dict = field(default_factory=dict)
    total_cycles: float = 0.0
    frequency_hz: float = 500e6

    @property
    def seconds(self) -> float:
        return self.total_cycles / self.frequency_hz

    def fractions(self) -> dict:
        if self.total_cycles == 0:
            return {p: 0.0 for p in PHASES}
        return {p: self.cycles_by_phase.get(p, 0.0) / self.total_cycles for p in PHASES}

    def phase_seconds(self) -> dict:
        return {p: self.cycles_by_phase.get(p, 0.0) / self.frequency_hz for p in PHASES}


def time_token(trace, hw: HardwareConfig) -> LatencyBreakdown:
    by_phase = {p: 0.0 for p in PHASES}
    by_layer: dict = {}
    total = 0.0
    for ev in trace:
        if not isinstance(ev, TraceEvent):
            raise DomainError(f"trace entries must be TraceEvent, got {type(ev).__name__}")
        c = event_cycles(ev, hw)
        by_phase[ev.phase] += c
        by_layer[ev.layer] = by_layer.get(ev.layer, 0.0) + c
        total += c
    return LatencyBreakdown(by_phase, by_layer, total, hw.frequency_hz)
