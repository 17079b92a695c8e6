"""Power model with workload-aware ROM power gating.

Components:

* ROM: leakage proportional to the transistor count of each powered bank.
* SRAM: static power per byte of KV cache and adapter storage.
* compute: MAC dynamic energy, plus clock and static power of the lanes.
* other: a constant for I/O, the controller and the reduction tree.

With gating on, only the banks of the executing layer and of the next layer
(wrapping to layer 0 at the end of the stack) are powered. Wake-up overlaps
the previous layer's execution, so gating never changes latency. A fixed
fraction of the compute clock power is also gated.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..arch.config import HardwareConfig
from ..arch.mapping import MappingPlan
from .rom_cost import RomCosts
from .timing import event_cycles, event_macs

COMPONENTS = ("ROM", "SRAM", "compute", "other")


@dataclass(frozen=True)
class PowerBreakdown:
    rom_w: float
    sram_w: float
    compute_w: float
    other_w: float
    mac_dynamic_w: float = 0.0
    compute_clock_w: float = 0.0
    gating: bool = False

    @property
    def total_w(self) -> float:
        return self.rom_w + self.sram_w + self.compute_w + self.other_w

    def components(self) -> dict:
        return {"ROM": self.rom_w, "SRAM": self.sram_w, "compute": self.compute_w, "other": self.other_w}

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.components().items()}
        d.update(total=self.total_w, mac_dynamic=self.mac_dynamic_w, compute_clock=self.compute_clock_w,
                 gating=self.gating)
        return d


def layer_leakage(plan: MappingPlan, costs: RomCosts, hw: HardwareConfig) -> list[float]:
    per_layer = []
    for layer_banks in plan.layer_banks:
        per_layer.append(sum(costs.bank_transistors[b] for b in layer_banks) * hw.rom_leakage_w_per_transistor)
    return per_layer


def powered_layers(layer: int, num_layers: int) -> frozenset:
    """Layers whose banks are on while ``layer`` executes (-1 = post-stack work)."""
    if num_layers == 0:
        return frozenset()
    cur = num_layers - 1 if layer < 0 else layer
    return frozenset({cur, (cur + 1) % num_layers})


def simulate_power(trace, plan: MappingPlan, hw: HardwareConfig, costs: RomCosts, gating: bool,
                   sram_bytes: int | None = None) -> PowerBreakdown:
    leak = layer_leakage(plan, costs, hw)
    rom_ungated = sum(leak)
    total_cycles = 0.0
    rom_energy = 0.0   # watt-cycles
    macs = 0
    for ev in trace:
        c = event_cycles(ev, hw)
        total_cycles += c
        macs += event_macs(ev)
        if gating:
            rom_energy += c * sum(leak[l] for l in powered_layers(ev.layer, len(leak)))
    if gating:
        rom_w = rom_energy / total_cycles if total_cycles else 0.0
    else:
        rom_w = rom_ungated
    seconds = total_cycles / hw.frequency_hz
    mac_w = hw.mac_energy_j * macs / seconds if seconds else 0.0
    clock_w = hw.compute_clock_w * ((1.0 - hw.compute_gating_fraction) if gating else 1.0)
    sram = hw.total_kv_bytes if sram_bytes is None else sram_bytes
    return PowerBreakdown(rom_w, sram * hw.sram_static_w_per_byte, mac_w + clock_w, hw.other_w, mac_w, clock_w,
                          gating)
