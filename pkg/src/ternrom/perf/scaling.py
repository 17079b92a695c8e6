"""LoRA and context-length scaling studies, normalized to a baseline point."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from ..arch.config import HardwareConfig
from ..arch.mapping import plan_mapping
from ..errors import DomainError
from ..model import ModelDescriptor
from ..sim.lora import PRESETS, LoraConfig
from .report import build_report
from .rom_cost import estimate_rom_costs

LORA_SWEEP = ("none", "qv", "qkvo", "all")
CONTEXT_SWEEP = (1024, 1536, 2048, 2560)


@dataclass(frozen=True)
class ScalingRow:
    kind: str
    label: str
    tbt_s: float
    area_mm2: float
    power_w: float
    sram_bytes: int
    sram_area_mm2: float
    sram_power_w: float
    tbt_norm: float = 1.0
    area_norm: float = 1.0
    power_norm: float = 1.0
    sram_norm: float = 1.0

    CSV_HEADER = ("kind", "label", "tbt_s", "area_mm2", "power_w", "sram_bytes", "sram_area_mm2", "sram_power_w",
                  "tbt_norm", "area_norm", "power_norm", "sram_norm")

    def csv_fields(self) -> list:
        return [getattr(self, k) if not isinstance(getattr(self, k), float) else repr(getattr(self, k))
                for k in self.CSV_HEADER]


def _normalize(rows: list[ScalingRow]) -> list[ScalingRow]:
    b = rows[0]
    out = []
    for r in rows:
        out.append(ScalingRow(r.kind, r.label, r.tbt_s, r.area_mm2, r.power_w, r.sram_bytes, r.sram_area_mm2,
                              r.sram_power_w, r.tbt_s / b.tbt_s, r.area_mm2 / b.area_mm2,
                              r.power_w / b.power_w, r.sram_bytes / b.sram_bytes))
    return out


def _row(kind: str, label: str, rep) -> ScalingRow:
    return ScalingRow(kind, label, rep.tbt_s, rep.area.total_mm2, rep.power.total_w, rep.capacity["sram_bytes"],
                      rep.area.sram_mm2, rep.power.sram_w)


def lora_sweep(model: ModelDescriptor, hw: HardwareConfig, rank: int = 16, presets=LORA_SWEEP,
               gating: bool = False) -> list[ScalingRow]:
    """One row per adapter target preset; the first preset is the baseline.

    Adapter SRAM is added on top of the KV cache, so area and static power grow
    with the adapter footprint, and TBT grows by the extra GEMV passes.
    """
    if not presets:
        raise DomainError("LoRA sweep needs at least one preset")
    plan = plan_mapping(model, hw)
    costs = estimate_rom_costs(plan, model)
    rows = []
    for name in presets:
        if name not in PRESETS:
            raise DomainError(f"unknown LoRA preset {name!r}; expected one of {sorted(PRESETS)}")
        lora = LoraConfig(rank, PRESETS[name])
        rows.append(_row("lora", name, build_report(model, hw, gating, lora=lora, plan=plan, costs=costs)))
    return _normalize(rows)


def context_sweep(model: ModelDescriptor, hw: HardwareConfig, contexts=CONTEXT_SWEEP,
                  gating: bool = False) -> list[ScalingRow]:
    """One row per max context; KV SRAM is provisioned for the full context and TBT is taken there."""
    contexts = list(contexts)
    if not contexts:
        raise DomainError("context sweep needs at least one context length")
    if any(c < 1 for c in contexts):
        raise DomainError("context lengths must be >= 1")
    base_plan = plan_mapping(model, hw)
    costs = estimate_rom_costs(base_plan, model)
    rows = []
    for c in contexts:
        hc = hw.with_context(c)
        rows.append(_row("context", str(c), build_report(model, hc, gating, plan=plan_mapping(model, hc),
                                                         costs=costs)))
    return _normalize(rows)


def rows_to_csv(rows: list[ScalingRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ScalingRow.CSV_HEADER)
    for r in rows:
        w.writerow(r.csv_fields())
    return buf.getvalue()
