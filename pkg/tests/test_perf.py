import csv
import io
import json
import math
from dataclasses import replace

import pytest

from ternrom.arch.mapping import plan_mapping
from ternrom.errors import DomainError
from ternrom.model import ModelDescriptor, bitnet_2b
from ternrom.perf.area import area_report, compute_area_mm2
from ternrom.perf.bandwidth import bandwidth_report
from ternrom.perf.power import layer_leakage, powered_layers, simulate_power
from ternrom.perf.report import build_report
from ternrom.perf.rom_cost import estimate_rom_costs
from ternrom.perf.scaling import context_sweep, lora_sweep, rows_to_csv
from ternrom.perf.timing import event_cycles, time_token
from ternrom.sim.engine import Engine
from ternrom.sim.lora import LoraConfig, PRESETS
from ternrom.sim.trace import PHASES, TraceEvent, dump_trace, load_trace, token_trace


@pytest.fixture(scope="module")
def bitnet():
    return bitnet_2b()


@pytest.fixture(scope="module")
def bitnet_setup(bitnet, hw):
    plan = plan_mapping(bitnet, hw)
    return plan, estimate_rom_costs(plan, bitnet)


# -- traces -----------------------------------------------------------------------------
def test_trace_structure(toy, bitnet):
    gemvs = [e for e in token_trace(toy, 10) if e.kind == "gemv"]
    assert len(gemvs) == 6 * toy.num_layers
    gated = [e for e in token_trace(bitnet, 10) if e.kind == "gemv"]
    assert len(gated) == 7 * bitnet.num_layers
    with_lora = [e for e in token_trace(toy, 10, LoraConfig(4, PRESETS["qv"])) if e.kind == "gemv"]
    assert len(with_lora) == 10 * toy.num_layers
    scores = [e for e in token_trace(toy, 10) if e.kind == "attn_scores"]
    assert len(scores) == toy.num_layers * toy.num_heads and all(e.key["ctx"] == 10 for e in scores)


def test_trace_depends_only_on_shape(toy, hw):
    assert token_trace(toy, 7) == token_trace(toy.shape_only(), 7)
    eng = Engine(toy, hw)
    for i, t in enumerate((1, 2, 3)):
        assert eng.step(t).trace == token_trace(toy, i + 1)


def test_trace_round_trip_and_errors(toy):
    tr = token_trace(toy, 3)
    assert load_trace(dump_trace(tr)) == tr
    with pytest.raises(DomainError, match="line 2"):
        load_trace(tr[0].to_json() + "\n{not json}\n")
    with pytest.raises(DomainError):
        TraceEvent("gemv", "nowhere", 0)
    with pytest.raises(DomainError):
        token_trace(toy, 0)


# -- timing -----------------------------------------------------------------------------
def test_event_cycles_hand_computed(hw):
    # 2560x2560 over 16 lanes x 10 MVUs: 40960 weights per MVU / 160 MACs = 256 cycles + fill
    assert event_cycles(TraceEvent("gemv", "QKV", 0, {"rows": 2560, "cols": 2560}), hw) == 256 + 33
    # 1024 positions / 16 lanes x (128 / 10 -> 13) dims = 832 / 160 -> 6 cycles + fill
    assert event_cycles(TraceEvent("attn_scores", "AS", 0, {"ctx": 1024, "hd": 128}), hw) == 6 + 15
    assert event_cycles(TraceEvent("reduce", "reduction", 0, {"len": 129}), hw) == 10 + 2
    # exp over 1024 elements: 64 per lane / 16 wide = 4 groups x 1 cycle + 2
    assert event_cycles(TraceEvent("vu", "AS", 0, {"op": "exp", "len": 1024}), hw) == 6
    with pytest.raises(DomainError):
        event_cycles(TraceEvent("gemv", "QKV", 0, {"rows": 1}), hw)


def test_latency_breakdown_closes(toy, hw):
    lat = time_token(token_trace(toy, 100), hw)
    assert math.isclose(sum(lat.fractions().values()), 1.0, rel_tol=1e-12)
    assert math.isclose(sum(lat.cycles_by_layer.values()), lat.total_cycles)
    assert set(lat.fractions()) == set(PHASES)
    assert time_token([], hw).total_cycles == 0
    with pytest.raises(DomainError):
        time_token(["gemv"], hw)


def test_latency_monotone_in_context(bitnet, hw):
    t = [time_token(token_trace(bitnet, c), hw).seconds for c in (1, 64, 256, 1024)]
    assert t == sorted(t) and t[0] < t[-1]


# -- power / area / bandwidth --------------------------------------------------------------
def test_powered_layers():
    assert powered_layers(0, 30) == {0, 1}
    assert powered_layers(29, 30) == {29, 0}
    assert powered_layers(-1, 30) == {29, 0}
    assert powered_layers(0, 1) == {0}
    assert powered_layers(0, 0) == frozenset()


def test_gated_rom_power_matches_layer_weighted_oracle(bitnet, hw, bitnet_setup):
    plan, costs = bitnet_setup
    tr = token_trace(bitnet, 512)
    lat = time_token(tr, hw)
    leak = layer_leakage(plan, costs, hw)
    n = len(leak)
    energy = 0.0
    for layer, cycles in lat.cycles_by_layer.items():
        cur = n - 1 if layer < 0 else layer
        energy += cycles * (leak[cur] + leak[(cur + 1) % n])
    gated = simulate_power(tr, plan, hw, costs, True)
    ungated = simulate_power(tr, plan, hw, costs, False)
    assert math.isclose(gated.rom_w, energy / lat.total_cycles, rel_tol=1e-12)
    assert math.isclose(ungated.rom_w, sum(leak), rel_tol=1e-12)
    assert gated.total_w < ungated.total_w
    assert gated.sram_w == ungated.sram_w and gated.other_w == ungated.other_w
    for p in (gated, ungated):
        assert math.isclose(sum(p.components().values()), p.total_w)


def test_area_and_bandwidth(bitnet, hw, bitnet_setup):
    _, costs = bitnet_setup
    a = area_report(costs, hw)
    assert math.isclose(sum(a.fractions().values()), 1.0)
    assert math.isclose(a.total_mm2, a.rom_mm2 + a.sram_mm2 + a.compute_mm2)
    assert area_report(costs, hw, 2 * hw.total_kv_bytes).sram_mm2 == pytest.approx(2 * a.sram_mm2)
    tr = token_trace(bitnet, 1024)
    bw = bandwidth_report(tr, hw)
    assert bw.bytes_per_token == bitnet.total_weights() * 2 / 8
    assert bw.sustained_bytes_per_s == pytest.approx(bw.bytes_per_token / time_token(tr, hw).seconds)
    assert bw.peak_TBps == 200.0


# -- report -----------------------------------------------------------------------------------
def test_report_schema_and_closure(toy, hw):
    rep = build_report(toy, hw, gating=True, prompt_tokens=5, tokens=(1, 2))
    rep.check_closure()
    d = json.loads(rep.to_json())
    for key in ("model", "hardware", "gating", "ttft_s", "tbt_s", "tps", "energy_per_token_j",
                "latency_fractions", "power_w", "power_ungated_w", "bandwidth", "area_mm2", "capacity", "lora",
                "tokens"):
        assert key in d
    assert d["tokens"] == [1, 2] and d["generated_tokens"] == 2
    ttft = sum(time_token(token_trace(toy, c), hw).seconds for c in range(1, 6))
    assert rep.ttft_s == pytest.approx(ttft)
    assert rep.power_ungated_w > rep.power.total_w
    rows = dict(csv.reader(io.StringIO(rep.to_csv())))
    assert float(rows["tbt_s"]) == rep.tbt_s
    assert rep.to_json() == build_report(toy, hw, gating=True, prompt_tokens=5, tokens=(1, 2)).to_json()


def test_report_capacity_fields(bitnet, hw, bitnet_setup):
    plan, costs = bitnet_setup
    rep = build_report(bitnet, hw, False, plan=plan, costs=costs)
    cap = rep.capacity
    assert cap["sram_MiB"] == 37.5 and cap["lora_bytes"] == 0
    assert 0 < cap["rom_discrepancy_pct"] < 1


# -- scaling -------------------------------------------------------------------------------------
def test_lora_sweep_monotone(bitnet, hw):
    rows = lora_sweep(bitnet, hw)
    assert [r.label for r in rows] == ["none", "qv", "qkvo", "all"]
    assert rows[0].tbt_norm == rows[0].area_norm == rows[0].power_norm == 1.0
    for a, b in zip(rows, rows[1:]):
        assert b.tbt_norm > a.tbt_norm and b.area_norm > a.area_norm and b.power_norm > a.power_norm
    text = rows_to_csv(rows)
    assert text.splitlines()[0].startswith("kind,label,tbt_s")
    assert len(text.splitlines()) == 5


def test_context_sweep_sram_linear(bitnet, hw):
    rows = context_sweep(bitnet, hw)
    assert [r.sram_norm for r in rows] == [1.0, 1.5, 2.0, 2.5]
    assert all(b.tbt_norm > a.tbt_norm for a, b in zip(rows, rows[1:]))


def test_sweep_argument_errors(toy, hw):
    with pytest.raises(DomainError):
        lora_sweep(toy, hw, presets=())
    with pytest.raises(DomainError):
        lora_sweep(toy, hw, presets=("everything",))
    with pytest.raises(DomainError):
        context_sweep(toy, hw, contexts=[])
    with pytest.raises(DomainError):
        context_sweep(toy, hw, contexts=[0])


# -- spec'd examples ------------------------------------------------------------------------------
def test_bitnet_area_anchor(bitnet, hw, bitnet_setup):
    _, costs = bitnet_setup
    a = area_report(costs, hw)
    fr = a.fractions()
    assert abs(a.total_mm2 / 56.9 - 1) <= 0.10
    assert abs(fr["ROM"] - 0.58) <= 0.05 and abs(fr["SRAM"] - 0.24) <= 0.05 and abs(fr["compute"] - 0.18) <= 0.05


def test_empty_model_floor(hw):
    empty = ModelDescriptor(0, 64, 96, 4, 16, 4, 0)
    plan = plan_mapping(empty, hw)
    costs = estimate_rom_costs(plan, empty)
    assert time_token(token_trace(empty, 1), hw).total_cycles == 0
    a = area_report(costs, hw)
    assert a.rom_mm2 == 0 and a.total_mm2 == a.sram_mm2 + compute_area_mm2(hw)
    assert bandwidth_report([], hw).sustained_bytes_per_s == 0


def test_doubling_macs_halves_gemv_cycles(bitnet, hw):
    tr = [e for e in token_trace(bitnet, 1024) if e.kind == "gemv"]
    fast = replace(hw, mvu_macs_per_cycle=2 * hw.mvu_macs_per_cycle)
    base = sum(event_cycles(e, hw) - hw.gemv_pipeline_cycles for e in tr)
    half = sum(event_cycles(e, fast) - fast.gemv_pipeline_cycles for e in tr)
    assert abs(half / base - 0.5) < 0.01


def test_single_layer_gating_is_neutral(toy, hw):
    one = toy.with_layers(1)
    plan = plan_mapping(one, hw)
    costs = estimate_rom_costs(plan, toy)
    tr = token_trace(one, 16)
    assert simulate_power(tr, plan, hw, costs, True).rom_w == pytest.approx(
        simulate_power(tr, plan, hw, costs, False).rom_w, rel=1e-12)


def test_toy_sustained_bandwidth_trace_sum(toy, hw):
    tr = token_trace(toy, 64)
    bw = bandwidth_report(tr, hw)
    assert bw.bytes_per_token == toy.total_weight_bytes()
    assert bw.sustained_bytes_per_s == pytest.approx(toy.total_weight_bytes() / time_token(tr, hw).seconds)


def test_lora_overhead_matches_two_path_formula(toy, hw):
    """Extra cycles of rank-16 adapters on every linear, from the closed-form cycle model."""
    r, m, n = 16, hw.num_lanes, hw.mvus_per_lane

    def gemv(rows, cols):
        return hw.gemv_pipeline_cycles + math.ceil(math.ceil(rows * math.ceil(cols / m) / n) / hw.mvu_macs_per_cycle)

    def reduce(length):
        return hw.reduction_tree_latency_cycles + math.ceil(length / hw.reduction_tree_width)

    def vu_add(length):
        return hw.vu_pipeline_cycles + hw.vu_cycles_add * math.ceil(math.ceil(length / m) / hw.vector_unit_width)

    extra = 0
    for name in ("Wq", "Wk", "Wv", "Wo", "W_ffn_up", "W_ffn_down"):
        rows, cols = toy.tensor_shape(name)
        extra += gemv(r, cols) + reduce(r) + gemv(rows, r) + reduce(rows) + vu_add(rows)
    extra *= toy.num_layers
    base = time_token(token_trace(toy, 1024), hw).total_cycles
    with_lora = time_token(token_trace(toy, 1024, LoraConfig(r, PRESETS["all"])), hw).total_cycles
    assert with_lora - base == extra


def test_tbt_monotone_in_model_size(hw):
    base = bitnet_2b()
    t0 = time_token(token_trace(base, 1024), hw).seconds
    for bigger in (replace(base, num_layers=31), replace(base, ffn_dim=7168), replace(base, num_heads=25, hidden_dim=25 * 128)):
        assert time_token(token_trace(bigger, 1024), hw).seconds >= t0
