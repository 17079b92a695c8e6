import numpy as np
import pytest

from ternrom.container import _HEADER, dumps, load_weights, loads, save_weights
from ternrom.errors import DomainError, FormatError
from ternrom.model import (
    ActivationKind, ModelDescriptor, NormKind, bitnet_2b, make_toy_model, tensor_key,
)


def test_hidden_equals_heads_times_head_dim():
    with pytest.raises(DomainError):
        ModelDescriptor(1, 100, 64, 3, 32)


def test_bitnet_shape_weight_count():
    m = bitnet_2b()
    # per layer: q 2560^2, k/v 640x2560, o 2560^2, up/gate/down 6912x2560
    per_layer = 2 * 2560 * 2560 + 2 * 640 * 2560 + 3 * 6912 * 2560
    assert m.weights_per_layer() == per_layer
    assert m.total_weights() == 30 * per_layer == 2_084_044_800
    assert m.kv_dim == 640
    assert (m.norm_kind, m.activation_kind, m.gated_ffn) == (NormKind.RMSNORM, ActivationKind.RELU2, True)


def test_toy_model_has_exact_tensor_set(toy):
    toy.validate_tensors()
    names = {k.split(".", 2)[2] for k in toy.tensors if k.startswith("layers.0.")}
    assert names == {"Wq", "Wk", "Wv", "Wo", "W_ffn_up", "W_ffn_down"}
    assert toy.tensor(0, "W_ffn_up").shape == (704, 256)
    assert abs(toy.sparsity().zero_value_ratio - 0.4) < 0.01


def test_toy_model_is_seed_deterministic():
    a, b = make_toy_model(seed=9, num_layers=1), make_toy_model(seed=9, num_layers=1)
    assert dumps(a) == dumps(b)
    assert dumps(a) != dumps(make_toy_model(seed=10, num_layers=1))


def test_save_load_round_trip(tmp_path):
    m = make_toy_model(seed=2, num_layers=2, hidden_dim=64, ffn_dim=128, num_heads=2, gated_ffn=True,
                       norm_kind=NormKind.RMSNORM)
    p = tmp_path / "m.tomw"
    save_weights(m, p)
    back = load_weights(p)
    assert set(back.tensors) == set(m.tensors)
    for k in m.tensors:
        assert back.tensors[k] == m.tensors[k]
    assert dumps(back) == p.read_bytes()
    assert back.gated_ffn and back.norm_kind == NormKind.RMSNORM


def test_code_11_in_file_is_format_error():
    m = make_toy_model(seed=1, num_layers=1, hidden_dim=16, ffn_dim=16, num_heads=2, vocab_size=0)
    buf = bytearray(dumps(m))
    buf[-1] |= 0b11000000                      # last element of the last tensor -> code 11
    with pytest.raises(FormatError) as e:
        loads(bytes(buf))
    assert e.value.offset == len(buf) - 1


def test_truncated_file_names_lengths():
    buf = dumps(make_toy_model(seed=1, num_layers=1, hidden_dim=16, ffn_dim=16, num_heads=2))
    with pytest.raises(FormatError) as e:
        loads(buf[:-3])
    msg = str(e.value)
    assert "expected length" in msg and f"actual {len(buf) - 3}" in msg
    with pytest.raises(FormatError):
        loads(buf[:5])


def test_bad_magic_version_and_trailing():
    buf = dumps(make_toy_model(seed=1, num_layers=1, hidden_dim=16, ffn_dim=16, num_heads=2))
    with pytest.raises(FormatError, match="magic"):
        loads(b"XXXX" + buf[4:])
    with pytest.raises(FormatError, match="version"):
        loads(buf[:4] + b"\x02\x00" + buf[6:])
    with pytest.raises(FormatError, match="trailing"):
        loads(buf + b"\x00")
    assert _HEADER.size == 4 + 2 + 28 + 3 + 4


def test_missing_file_names_path(tmp_path):
    p = tmp_path / "absent.tomw"
    with pytest.raises(FileNotFoundError, match="absent.tomw"):
        load_weights(p)


def test_tensor_key_format():
    assert tensor_key(3, "Wq") == "layers.3.Wq"
    m = make_toy_model(seed=0, num_layers=1, hidden_dim=16, ffn_dim=8, num_heads=2)
    with pytest.raises(DomainError):
        m.tensor(1, "Wq")
    assert np.all(np.isin(m.embed.values(), (-1, 0, 1)))
