import numpy as np
import pytest

from ternrom.errors import DomainError
from ternrom.rom.bank import random_bank
from ternrom.rom.cost import transistor_count
from ternrom.rom.network import build_logic_network
from ternrom.rom.synth import (
    SweepRow, calibrate_area_per_transistor, density_sweep, height_sweep, scale_density, sweep_point,
    synthesize,
)
from ternrom.rom.cost import AreaCalibration


@pytest.fixture(scope="module")
def ratio_sweep():
    return density_sweep(1024, 128, [round(0.5 + 0.05 * i, 2) for i in range(10)])


def test_density_increases_with_zero_bits(ratio_sweep):
    d = [r.density_MB_mm2 for r in ratio_sweep]
    assert len(d) == 10
    assert all(b > a for a, b in zip(d, d[1:]))
    assert all(b.transistors <= a.transistors for a, b in zip(ratio_sweep, ratio_sweep[1:]))


def test_anchor_point(ratio_sweep):
    anchor = next(r for r in ratio_sweep if r.zero_bit_ratio == 0.7)
    assert anchor.density_MB_mm2 == pytest.approx(15.0, rel=0.02)


def test_ratio_one_has_no_transistors():
    for h in (16, 256, 1024):
        row = sweep_point(h, 128, 1.0)
        assert row.transistors == 0 and row.density_MB_mm2 == float("inf")


def test_sweep_rows_are_seed_deterministic():
    a = sweep_point(256, 64, 0.8, seed=4)
    b = sweep_point(256, 64, 0.8, seed=4)
    assert a == b
    assert a.csv_fields() == b.csv_fields()
    assert SweepRow.CSV_HEADER == ("height", "width", "zero_bit_ratio", "transistors", "area_mm2", "density_MB_mm2")


def test_sweep_argument_errors():
    with pytest.raises(DomainError):
        density_sweep(64, 16, [])
    with pytest.raises(DomainError):
        density_sweep(64, 16, [1.5])
    with pytest.raises(DomainError):
        height_sweep([])


def test_scale_density_examples():
    assert scale_density(0.357, 65, 7) == pytest.approx(4.30, abs=0.005)
    assert scale_density(1.09, 28, 7) == pytest.approx(3.57, abs=0.01)
    assert scale_density(2.5, 28, 28) == 2.5
    with pytest.raises(DomainError):
        scale_density(1.0, 45, 7)


def test_expected_cost_non_increasing_in_sparsity():
    ratios = (0.6, 0.7, 0.8, 0.9)
    means = []
    for r in ratios:
        costs = [transistor_count(synthesize(random_bank(np.random.default_rng([s, 7]), 64, 32, r))[0])
                 for s in range(8)]
        means.append(np.mean(costs))
    assert all(b <= a for a, b in zip(means, means[1:]))


def test_calibration_reproduces_shipped_constant():
    apt = calibrate_area_per_transistor(seed=0)
    assert apt == pytest.approx(AreaCalibration().area_per_transistor_mm2, rel=1e-6)


def test_synthesize_without_cse_matches_naive():
    bank = random_bank(np.random.default_rng(2), 64, 16, 0.7)
    net, cost = synthesize(bank, optimize=False)
    assert cost.transistor_count == transistor_count(build_logic_network(bank))
