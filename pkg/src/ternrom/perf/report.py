"""RunReport assembly and JSON / CSV emission.

JSON schema (all keys always present)::

    {
      "model": {...shape...}, "hardware": {...}, "gating": bool,
      "context": int, "prompt_tokens": int, "generated_tokens": int,
      "ttft_s": float, "tbt_s": float, "tps": float, "energy_per_token_j": float,
      "latency_fractions": {phase: fraction}, "latency_s": {phase: seconds},
      "power_w": {"ROM", "SRAM", "compute", "other", "total", "mac_dynamic", "compute_clock", "gating"},
      "power_ungated_w": float,
      "bandwidth": {"peak_TB_per_s", "sustained_TB_per_s", "rom_bytes_per_token"},
      "area_mm2": {"ROM", "SRAM", "compute", "total", "fractions"},
      "capacity": {"rom_MiB", "rom_reported_MB", "rom_discrepancy_pct", "sram_MiB", "model_weight_bytes",
                   "sram_bytes", "lora_bytes"},
      "lora": {"rank", "targets"},
      "tokens": [int, ...]
    }

TBT is the latency of a token decoded with a full cache (``context``); TTFT
is the summed latency of the prompt tokens.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from ..arch.config import HardwareConfig
from ..arch.mapping import MappingPlan, plan_mapping
from ..model import ModelDescriptor
from ..sim.lora import LoraConfig
from ..sim.trace import token_trace
from .area import AreaBreakdown, area_report
from .bandwidth import BandwidthReport, bandwidth_report
from .power import PowerBreakdown, simulate_power
from .rom_cost import RomCosts, estimate_rom_costs
from .timing import LatencyBreakdown, time_token


@dataclass(frozen=True)
class RunReport:
    model: dict
    hardware: dict
    gating: bool
    context: int
    prompt_tokens: int
    generated_tokens: int
    ttft_s: float
    tbt_s: float
    latency: LatencyBreakdown
    power: PowerBreakdown
    power_ungated_w: float
    bandwidth: BandwidthReport
    area: AreaBreakdown
    capacity: dict
    lora: dict
    tokens: tuple = field(default_factory=tuple)

    @property
    def tps(self) -> float:
        return 1.0 / self.tbt_s if self.tbt_s > 0 else 0.0

    @property
    def energy_per_token_j(self) -> float:
        return self.power.total_w * self.tbt_s

    def to_dict(self) -> dict:
        return {
            "model": self.model, "hardware": self.hardware, "gating": self.gating, "context": self.context,
            "prompt_tokens": self.prompt_tokens, "generated_tokens": self.generated_tokens,
            "ttft_s": self.ttft_s, "tbt_s": self.tbt_s, "tps": self.tps,
            "energy_per_token_j": self.energy_per_token_j,
            "latency_fractions": self.latency.fractions(), "latency_s": self.latency.phase_seconds(),
            "power_w": self.power.to_dict(), "power_ungated_w": self.power_ungated_w,
            "bandwidth": self.bandwidth.to_dict(), "area_mm2": self.area.to_dict(),
            "capacity": self.capacity, "lora": self.lora, "tokens": list(self.tokens),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        rows = [("metric", "value"),
                ("ttft_s", self.ttft_s), ("tbt_s", self.tbt_s), ("tps", self.tps),
                ("energy_per_token_j", self.energy_per_token_j), ("gating", self.gating)]
        rows += [(f"latency_frac_{p}", f) for p, f in self.latency.fractions().items()]
        rows += [(f"power_{k}_w", v) for k, v in self.power.components().items()]
        rows += [("power_total_w", self.power.total_w), ("power_ungated_w", self.power_ungated_w)]
        rows += [("peak_TB_per_s", self.bandwidth.peak_TBps), ("sustained_TB_per_s", self.bandwidth.sustained_TBps)]
        rows += [(f"area_{k}_mm2", v) for k, v in self.area.to_dict().items() if k != "fractions"]
        rows += [(f"capacity_{k}", v) for k, v in self.capacity.items()]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for r in rows:
            w.writerow([r[0], repr(r[1]) if isinstance(r[1], float) else r[1]])
        return buf.getvalue()

    def check_closure(self, tol: float = 1e-9):
        """Breakdown fractions sum to 1 and power components sum to the total."""
        fr = self.latency.fractions()
        if self.latency.total_cycles > 0 and abs(sum(fr.values()) - 1.0) > tol:
            raise AssertionError(f"latency fractions sum to {sum(fr.values())}")
        if abs(sum(self.power.components().values()) - self.power.total_w) > tol * max(1.0, self.power.total_w):
            raise AssertionError("power components do not sum to total")
        if self.tbt_s > 0 and abs(self.tps * self.tbt_s - 1.0) > tol:
            raise AssertionError("tps != 1/tbt")


def model_summary(model: ModelDescriptor) -> dict:
    return {"num_layers": model.num_layers, "hidden_dim": model.hidden_dim, "ffn_dim": model.ffn_dim,
            "num_heads": model.num_heads, "head_dim": model.head_dim, "num_kv_heads": model.num_kv_heads,
            "vocab_size": model.vocab_size, "norm": model.norm_kind.value, "activation": model.activation_kind.value,
            "gated_ffn": model.gated_ffn, "weights": model.total_weights()}


def capacity_summary(model: ModelDescriptor, hw: HardwareConfig, sram_bytes: int, lora_bytes: int) -> dict:
    return {
        "rom_MiB": hw.total_rom_mb,
        "rom_reported_MB": hw.reported_rom_mb,
        "rom_discrepancy_pct": 100.0 * (hw.reported_rom_mb - hw.total_rom_mb) / hw.reported_rom_mb,
        "sram_MiB": sram_bytes / (1 << 20),
        "sram_bytes": sram_bytes,
        "kv_bytes": hw.total_kv_bytes,
        "lora_bytes": lora_bytes,
        "model_weight_bytes": model.total_weight_bytes(),
    }


def build_report(model: ModelDescriptor, hw: HardwareConfig, gating: bool, lora: LoraConfig | None = None,
                 context: int | None = None, prompt_tokens: int = 1, plan: MappingPlan | None = None,
                 costs: RomCosts | None = None, tokens=(), token_contexts=None) -> RunReport:
    """Timing, power, bandwidth and area for a model on a hardware config.

    ``token_contexts`` lists the context length of every simulated token
    (prompt first); when omitted, TTFT assumes a prompt of ``prompt_tokens``.
    """
    plan = plan or plan_mapping(model, hw)
    costs = costs or estimate_rom_costs(plan, model)
    lora = lora or LoraConfig()
    ctx = hw.max_context if context is None else context
    trace = token_trace(model, ctx, lora)
    lat = time_token(trace, hw)
    lora_bytes = lora.total_bytes(model)
    sram_bytes = hw.total_kv_bytes + lora_bytes
    pw = simulate_power(trace, plan, hw, costs, gating, sram_bytes)
    ungated = pw if not gating else simulate_power(trace, plan, hw, costs, False, sram_bytes)
    bw = bandwidth_report(trace, hw)
    area = area_report(costs, hw, sram_bytes)
    if token_contexts is None:
        token_contexts = list(range(1, prompt_tokens + 1))
    prompt_ctx = token_contexts[:prompt_tokens]
    ttft = sum(time_token(token_trace(model, c, lora), hw).seconds for c in prompt_ctx)
    return RunReport(
        model=model_summary(model), hardware=hw.to_dict(), gating=gating, context=ctx,
        prompt_tokens=prompt_tokens, generated_tokens=len(tokens),
        ttft_s=ttft, tbt_s=lat.seconds, latency=lat, power=pw, power_ungated_w=ungated.total_w,
        bandwidth=bw, area=area, capacity=capacity_summary(model, hw, sram_bytes, lora_bytes),
        lora={"rank": lora.rank, "targets": sorted(lora.targets)}, tokens=tuple(tokens),
    )

