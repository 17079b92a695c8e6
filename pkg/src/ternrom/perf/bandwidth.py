"""Peak and sustained ROM read bandwidth."""

from __future__ import annotations

from dataclasses import dataclass

from ..arch.config import HardwareConfig
from .timing import event_cycles, event_rom_bytes


@dataclass(frozen=True)
class BandwidthReport:
    peak_bytes_per_s: float
    sustained_bytes_per_s: float
    bytes_per_token: float

    @property
    def peak_TBps(self) -> float:
        return self.peak_bytes_per_s / 1e12

    @property
    def sustained_TBps(self) -> float:
        return self.sustained_bytes_per_s / 1e12

    def to_dict(self) -> dict:
        return {"peak_TB_per_s": self.peak_TBps, "sustained_TB_per_s": self.sustained_TBps,
                "rom_bytes_per_token": self.bytes_per_token}


def bandwidth_report(trace, hw: HardwareConfig) -> BandwidthReport:
    """Peak = every MVU reading its full port each cycle.

    Sustained = ROM bytes the token actually reads, divided by token latency.
    Decimal units: 1 TB/s = 1e12 B/s.
    """
    cycles = 0.0
    read = 0.0
    for ev in trace:
        cycles += event_cycles(ev, hw)
        read += event_rom_bytes(ev)
    seconds = cycles / hw.frequency_hz
    sustained = read / seconds if seconds > 0 else 0.0
    return BandwidthReport(hw.peak_bandwidth_bytes_per_s, sustained, read)
