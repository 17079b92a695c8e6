"""Bank-level synthesis pipeline, density sweeps and technology scaling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import DomainError
from .bank import DEFAULT_WIDTH, RomBankSpec, random_bank, random_ternary_bank
from .cost import MIB, AreaCalibration, CostReport, estimate_cost
from .cse import cse_optimize
from .network import LogicNetwork, build_logic_network

# Density multipliers to reach 7 nm from each supported node.
NODE_TO_7NM = {65: 12.04, 28: 3.28, 7: 1.0}

# The (1024 x 128, 70% zero bits) bank is the density calibration anchor.
ANCHOR_HEIGHT = 1024
ANCHOR_ZERO_BIT_RATIO = 0.70
ANCHOR_DENSITY_MB_MM2 = 15.0


def synthesize(bank: RomBankSpec, calib: AreaCalibration | None = None,
               optimize: bool = True) -> tuple[LogicNetwork, CostReport]:
    net = build_logic_network(bank)
    if optimize:
        net = cse_optimize(net)
    return net, estimate_cost(net, calib)


def point_rng(seed: int, height: int, width: int, zero_bit_ratio: float) -> np.random.Generator:
    """Independent, reproducible stream for one sweep point."""
    return np.random.default_rng([seed, height, width, int(round(zero_bit_ratio * 1_000_000))])


@dataclass(frozen=True)
class SweepRow:
    height: int
    width: int
    zero_bit_ratio: float
    transistors: int
    area_mm2: float
    density_MB_mm2: float

    CSV_HEADER = ("height", "width", "zero_bit_ratio", "transistors", "area_mm2", "density_MB_mm2")

    def csv_fields(self) -> list[str]:
        d = "unbounded" if math.isinf(self.density_MB_mm2) else f"{self.density_MB_mm2:.6f}"
        return [str(self.height), str(self.width), f"{self.zero_bit_ratio:.4f}", str(self.transistors),
                f"{self.area_mm2:.9f}", d]


def sweep_point(height: int, width: int, zero_bit_ratio: float, seed: int = 0,
                calib: AreaCalibration | None = None) -> SweepRow:
    bank = random_bank(point_rng(seed, height, width, zero_bit_ratio), height, width, zero_bit_ratio)
    _, cost = synthesize(bank, calib)
    return SweepRow(height, width, zero_bit_ratio, cost.transistor_count, cost.area_mm2, cost.density_MB_per_mm2)


def density_sweep(height: int, width: int, zero_bit_ratios, seed: int = 0,
                  calib: AreaCalibration | None = None) -> list[SweepRow]:
    ratios = list(zero_bit_ratios)
    if not ratios:
        raise DomainError("density sweep needs at least one zero-bit ratio")
    for r in ratios:
        if not 0.0 <= r <= 1.0:
            raise DomainError(f"zero-bit ratio {r} outside [0, 1]")
    return [sweep_point(height, width, r, seed, calib) for r in ratios]


def height_sweep(heights, width: int = DEFAULT_WIDTH, zero_bit_ratio: float = ANCHOR_ZERO_BIT_RATIO,
                 seed: int = 0, calib: AreaCalibration | None = None) -> list[SweepRow]:
    heights = list(heights)
    if not heights:
        raise DomainError("height sweep needs at least one height")
    if any(h < 1 for h in heights):
        raise DomainError("bank heights must be positive")
    return [sweep_point(h, width, zero_bit_ratio, seed, calib) for h in heights]


def scale_density(d: float, from_node: int, to_node: int) -> float:
    """Rescale a storage density between technology nodes (65, 28 or 7 nm)."""
    for node in (from_node, to_node):
        if node not in NODE_TO_7NM:
            raise DomainError(f"unsupported technology node {node} nm; expected one of {sorted(NODE_TO_7NM)}")
    return d * NODE_TO_7NM[from_node] / NODE_TO_7NM[to_node]


def calibrate_area_per_transistor(seed: int = 0, target: float = ANCHOR_DENSITY_MB_MM2,
                                  knots=AreaCalibration().routing_knots) -> float:
    """Area per transistor that puts the seeded anchor bank exactly at ``target`` MB/mm^2."""
    bank = random_bank(point_rng(seed, ANCHOR_HEIGHT, DEFAULT_WIDTH, ANCHOR_ZERO_BIT_RATIO),
                       ANCHOR_HEIGHT, DEFAULT_WIDTH, ANCHOR_ZERO_BIT_RATIO)
    net = cse_optimize(build_logic_network(bank))
    cost = estimate_cost(net, AreaCalibration(1.0, knots))
    return bank.height * bank.width / 8 / MIB / (target * cost.area_mm2)


@lru_cache(maxsize=64)
def transistors_per_bit(height: int, zero_value_ratio: float, width: int = DEFAULT_WIDTH, seed: int = 0) -> float:
    """Characterized transistor cost per stored bit for ternary-weight banks of one geometry.

    Used to cost whole models whose banks are too numerous to synthesize
    individually; one seeded sample bank stands in for all banks of that shape.
    """
    rng = np.random.default_rng([seed, height, width, int(round(zero_value_ratio * 1_000_000)), 7])
    bank = random_ternary_bank(rng, height, width, zero_value_ratio)
    _, cost = synthesize(bank)
    return cost.transistor_count / (height * width)
