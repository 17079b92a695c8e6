"""Binary weight container (little-endian).

Layout::

    magic    4s   b"TOMW"
    version  u16  1
    header   7 x u32  num_layers, hidden_dim, ffn_dim, num_heads, head_dim, num_kv_heads, vocab_size
             3 x u8   norm_kind (0 LayerNorm, 1 RMSNorm), activation_kind (0 GELU, 1 ReLU^2), gated_ffn
    count    u32  number of tensor records
    records  name_len u16, name (utf-8), rows u32, cols u32, scale f64, packed 2-bit codes

Codes are row-major with the first element in the low two bits of each byte.
Records are written in sorted-name order so saving is byte-deterministic.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import FormatError
from .model import ActivationKind, ModelDescriptor, NormKind
from .ternary import TernaryMatrix, packed_length

MAGIC = b"TOMW"
VERSION = 1
_HEADER = struct.Struct("<4sH7I3BI")
_REC_NAME = struct.Struct("<H")
_REC_META = struct.Struct("<IId")

_NORMS = [NormKind.LAYERNORM, NormKind.RMSNORM]
_ACTS = [ActivationKind.GELU, ActivationKind.RELU2]


def dumps(model: ModelDescriptor) -> bytes:
    parts = [_HEADER.pack(
        MAGIC, VERSION, model.num_layers, model.hidden_dim, model.ffn_dim, model.num_heads,
        model.head_dim, model.num_kv_heads, model.vocab_size,
        _NORMS.index(model.norm_kind), _ACTS.index(model.activation_kind), int(model.gated_ffn),
        len(model.tensors),
    )]
    for name in sorted(model.tensors):
        m = model.tensors[name]
        raw = name.encode("utf-8")
        parts += [_REC_NAME.pack(len(raw)), raw, _REC_META.pack(m.rows, m.cols, m.scale), m.packed.tobytes()]
    return b"".join(parts)


def _need(buf: bytes, offset: int, n: int, what: str):
    if offset + n > len(buf):
        raise FormatError(
            f"truncated container: {what} needs {n} bytes, expected length >= {offset + n}, actual {len(buf)}",
            offset=offset)


def loads(buf: bytes) -> ModelDescriptor:
    _need(buf, 0, _HEADER.size, "header")
    (magic, version, layers, hidden, ffn, heads, head_dim, kv_heads, vocab,
     norm, act, gated, count) = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}", offset=4)
    if norm >= len(_NORMS) or act >= len(_ACTS) or gated > 1:
        raise FormatError("invalid enum tag in header", offset=_HEADER.size - 7)
    off = _HEADER.size
    tensors = {}
    for _ in range(count):
        _need(buf, off, _REC_NAME.size, "tensor name length")
        (nlen,) = _REC_NAME.unpack_from(buf, off)
        off += _REC_NAME.size
        _need(buf, off, nlen, "tensor name")
        try:
            name = buf[off:off + nlen].decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("tensor name is not valid utf-8", offset=off) from None
        off += nlen
        _need(buf, off, _REC_META.size, f"{name} metadata")
        rows, cols, scale = _REC_META.unpack_from(buf, off)
        off += _REC_META.size
        n = packed_length(rows, cols)
        _need(buf, off, n, f"{name} codes")
        packed = np.frombuffer(buf, dtype=np.uint8, count=n, offset=off)
        try:
            tensors[name] = TernaryMatrix(rows, cols, packed, scale)
        except FormatError as e:
            # re-anchor the offset to the file rather than the tensor
            raise FormatError(f"{name}: {str(e).split(' (at offset')[0]}", offset=off + (e.offset or 0)) from None
        off += n
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes after last tensor", offset=off)
    try:
        return ModelDescriptor(layers, hidden, ffn, heads, head_dim, kv_heads, vocab,
                               _NORMS[norm], _ACTS[act], bool(gated), tensors)
    except ValueError as e:
        raise FormatError(f"inconsistent model header: {e}", offset=0) from None


def save_weights(model: ModelDescriptor, path) -> None:
    data = dumps(model)
    with open(path, "wb") as f:
        f.write(data)


def load_weights(path) -> ModelDescriptor:
    if not os.path.exists(path):
        raise FileNotFoundError(f"weight file not found: {path}")
    with open(path, "rb") as f:
        return loads(f.read())
