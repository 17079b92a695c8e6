"""Transistor costing and the calibrated area/density model.

Static-CMOS transistor counts per gate:

    INV            2
    NAND2 / NOR2   4
    AND2 / OR2     6  (NAND/NOR plus an output inverter)
    OR_k           2k + 2  (each extra fan-in adds 2)
    AND_k          4(k - 1) + 2  (decoder minterm built as a tree of
                   NAND2/NOR2 stages plus a final inverter; 6 for k = 2)
    1-input gate   0  (a wire)
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .network import Kind, LogicNetwork

MIB = float(1 << 20)

COST_INV = 2


def gate_transistors(kind: Kind, fanin: int) -> int:
    if kind == Kind.INV:
        return COST_INV
    if kind in (Kind.CONST0, Kind.ADDR) or fanin < 2:
        return 0
    if kind == Kind.AND:
        return 4 * (fanin - 1) + 2
    if kind == Kind.OR:
        return 2 * fanin + 2
    raise ValueError(f"no cost for gate kind {kind!r}")


def gate_counts(net: LogicNetwork) -> dict[str, int]:
    """Counts of live gates keyed ``INV``, ``AND<k>``, ``OR<k>`` (wires and inputs omitted)."""
    live = net.live_nodes()
    counts: Counter = Counter()
    for n in np.flatnonzero(live):
        k = net.kinds[n]
        fi = len(net.fanins[n])
        if k == Kind.INV:
            counts["INV"] += 1
        elif k in (Kind.AND, Kind.OR) and fi >= 2:
            counts[f"{k.name}{fi}"] += 1
    return dict(sorted(counts.items()))


def transistors_from_counts(counts: dict[str, int]) -> int:
    total = 0
    for key, c in counts.items():
        if key == "INV":
            total += c * COST_INV
        elif key.startswith("AND"):
            total += c * gate_transistors(Kind.AND, int(key[3:]))
        elif key.startswith("OR"):
            total += c * gate_transistors(Kind.OR, int(key[2:]))
        else:
            raise ValueError(f"unknown gate key {key!r}")
    return total


def transistor_count(net: LogicNetwork) -> int:
    return transistors_from_counts(gate_counts(net))


def naive_two_level_cost(bits: np.ndarray) -> int:
    """Closed-form cost of ``build_logic_network`` output (private minterms per one-bit)."""
    bits = np.asarray(bits, bool)
    h = bits.shape[0]
    a = max(1, int(h - 1).bit_length())
    ones_per_col = bits.sum(0)
    and_cost = gate_transistors(Kind.AND, a)
    or_cost = sum(gate_transistors(Kind.OR, int(k)) for k in ones_per_col if k >= 2)
    used_bits = _used_inverters(np.flatnonzero(bits.any(1)), a)
    return int(ones_per_col.sum()) * and_cost + or_cost + COST_INV * used_bits


def _used_inverters(addresses: np.ndarray, a: int) -> int:
    n = 0
    for b in range(a):
        if np.any(((addresses >> b) & 1) == 0):
            n += 1
    return n


@dataclass(frozen=True)
class AreaCalibration:
    """area_mm2 = transistors * area_per_transistor_mm2 * routing_factor(height).

    ``routing_knots`` are (height, factor) points, interpolated linearly in
    log2(height) and clamped outside the knot range.
    """

    area_per_transistor_mm2: float = 1.1545083e-8
    routing_knots: tuple = ((256, 1.25), (512, 1.10), (1024, 1.00), (2048, 1.01), (4096, 1.10))

    def routing_factor(self, height: int) -> float:
        xs = [math.log2(h) for h, _ in self.routing_knots]
        ys = [f for _, f in self.routing_knots]
        return float(np.interp(math.log2(max(height, 1)), xs, ys))

    def area_mm2(self, transistors: int, height: int) -> float:
        return transistors * self.area_per_transistor_mm2 * self.routing_factor(height)


@dataclass(frozen=True)
class CostReport:
    height: int
    width: int
    gate_counts: dict = field(default_factory=dict)
    transistor_count: int = 0
    area_mm2: float = 0.0
    density_MB_per_mm2: float = math.inf

    @property
    def bits(self) -> int:
        return self.height * self.width

    @property
    def megabytes(self) -> float:
        return self.bits / 8 / MIB

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.density_MB_per_mm2)

    @property
    def transistors_per_bit(self) -> float:
        return self.transistor_count / self.bits

    def to_dict(self) -> dict:
        return {
            "height": self.height, "width": self.width, "gate_counts": dict(self.gate_counts),
            "transistors": self.transistor_count, "area_mm2": self.area_mm2,
            "density_MB_mm2": "unbounded" if self.unbounded else self.density_MB_per_mm2,
        }


def density(megabytes: float, area_mm2: float) -> float:
    return math.inf if area_mm2 <= 0 else megabytes / area_mm2


def estimate_cost(net: LogicNetwork, calib: AreaCalibration | None = None) -> CostReport:
    calib = calib or AreaCalibration()
    counts = gate_counts(net)
    t = transistors_from_counts(counts)
    area = calib.area_mm2(t, net.height)
    mb = net.height * net.width / 8 / MIB
    return CostReport(net.height, net.width, counts, t, area, density(mb, area))
