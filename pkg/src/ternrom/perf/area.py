"""Chip area roll-up: ROM banks + SRAM + compute logic."""

from __future__ import annotations

from dataclasses import dataclass

from ..arch.config import HardwareConfig
from .rom_cost import RomCosts


@dataclass(frozen=True)
class AreaBreakdown:
    rom_mm2: float
    sram_mm2: float
    compute_mm2: float

    @property
    def total_mm2(self) -> float:
        return self.rom_mm2 + self.sram_mm2 + self.compute_mm2

    def fractions(self) -> dict:
        t = self.total_mm2
        return {"ROM": self.rom_mm2 / t, "SRAM": self.sram_mm2 / t, "compute": self.compute_mm2 / t}

    def to_dict(self) -> dict:
        return {"ROM": self.rom_mm2, "SRAM": self.sram_mm2, "compute": self.compute_mm2, "total": self.total_mm2,
                "fractions": self.fractions()}


def compute_area_mm2(hw: HardwareConfig) -> float:
    return hw.num_mvus * hw.mvu_logic_mm2 + hw.num_lanes * hw.vu_mm2 + hw.global_mm2


def area_report(costs: RomCosts | None, hw: HardwareConfig, sram_bytes: int | None = None) -> AreaBreakdown:
    sram = hw.total_kv_bytes if sram_bytes is None else sram_bytes
    rom = costs.total_area_mm2 if costs is not None else 0.0
    return AreaBreakdown(rom, sram * hw.sram_mm2_per_byte, compute_area_mm2(hw))
