"""Per-bank ROM transistor estimates for whole models.

A 2B-parameter model occupies tens of thousands of banks, so model-level
area and leakage use characterized transistors-per-bit. One seeded sample
bank is synthesized per distinct bank height, at the model's zero-value
ratio. The ratio is measured from the weights when present, and otherwise
taken from ``hw.assumed_zero_value_ratio``. ``synthesize_plan`` compiles
every bank for real and is used when exact netlists are wanted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..arch.mapping import MappingPlan, bank_codes
from ..model import ModelDescriptor
from ..rom.bank import bank_from_codes
from ..rom.synth import synthesize, transistors_per_bit


@dataclass(frozen=True)
class RomCosts:
    bank_transistors: dict = field(default_factory=dict)    # bank_id -> transistors
    bank_area_mm2: dict = field(default_factory=dict)       # bank_id -> mm^2
    zero_value_ratio: float = 0.0
    exact: bool = False

    @property
    def total_transistors(self) -> float:
        return float(sum(self.bank_transistors.values()))

    @property
    def total_area_mm2(self) -> float:
        return float(sum(self.bank_area_mm2.values()))


def model_zero_value_ratio(model: ModelDescriptor, default: float) -> float:
    if model.has_weights:
        return model.sparsity().zero_value_ratio
    return default


def estimate_rom_costs(plan: MappingPlan, model: ModelDescriptor | None = None) -> RomCosts:
    hw = plan.hw
    model = model or plan.model
    zvr = round(model_zero_value_ratio(model, hw.assumed_zero_value_ratio), 4)
    calib = hw.area_calibration
    per_bit = {}
    trans, area = {}, {}
    for b in plan.banks:
        if b.words not in per_bit:
            per_bit[b.words] = transistors_per_bit(b.words, zvr, hw.bank_width)
        t = per_bit[b.words] * b.words * hw.bank_width
        trans[b.bank_id] = t
        area[b.bank_id] = calib.area_mm2(t, b.words)
    return RomCosts(trans, area, zvr, exact=False)


def synthesize_plan(plan: MappingPlan, model: ModelDescriptor, optimize: bool = True):
    """Compile every bank of a model with weights: yields ``(BankInfo, LogicNetwork, CostReport)``."""
    calib = plan.hw.area_calibration
    for b in plan.banks:
        bank = bank_from_codes(bank_codes(plan, model, b), plan.hw.bank_width)
        net, cost = synthesize(bank, calib, optimize)
        yield b, net, cost


def exact_rom_costs(plan: MappingPlan, model: ModelDescriptor) -> RomCosts:
    trans, area = {}, {}
    for b, _net, cost in synthesize_plan(plan, model):
        trans[b.bank_id] = float(cost.transistor_count)
        area[b.bank_id] = cost.area_mm2
    return RomCosts(trans, area, model_zero_value_ratio(model, 0.0), exact=True)
