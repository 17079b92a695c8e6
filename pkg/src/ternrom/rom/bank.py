"""ROM bank contents: the (height x width) bit grid a bank must reproduce."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CapacityError, DomainError
from ..ternary import TernaryMatrix

MAX_BANK_BITS = 1 << 24
DEFAULT_WIDTH = 128


@dataclass(frozen=True, eq=False)
class RomBankSpec:
    """A bank of ``height`` words, each ``width`` bits wide.

    ``bits[a, j]`` is output bit ``j`` at address ``a``. For weight banks, bit
    ``2k`` / ``2k+1`` of a word are the low / high bit of the ``k``-th
    ternary code in that word.
    """

    bits: np.ndarray

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise DomainError(f"bank must be a non-empty 2-D bit grid, got shape {bits.shape}")
        if bits.size > MAX_BANK_BITS:
            raise CapacityError(f"bank of {bits.shape[0]}x{bits.shape[1]} bits exceeds the {MAX_BANK_BITS}-bit limit")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def address_width(self) -> int:
        return address_width(self.height)

    @property
    def zero_bit_ratio(self) -> float:
        return 1.0 - float(self.bits.mean())

    def word(self, address: int) -> int:
        """Stored word as an integer, bit ``j`` of the word = output ``j``."""
        return int.from_bytes(np.packbits(self.bits[address], bitorder="little").tobytes(), "little")

    def __eq__(self, other):
        return isinstance(other, RomBankSpec) and np.array_equal(self.bits, other.bits)

    __hash__ = None


def address_width(height: int) -> int:
    return max(1, int(height - 1).bit_length())


def codes_to_bits(codes: np.ndarray, width: int = DEFAULT_WIDTH) -> np.ndarray:
    """Lay a flat stream of 2-bit codes into words of ``width`` bits (zero padded)."""
    if width % 2:
        raise DomainError("bank width must be even (two bits per weight)")
    codes = np.asarray(codes, dtype=np.uint8).ravel()
    per_word = width // 2
    words = -(-codes.size // per_word) if codes.size else 0
    padded = np.zeros(words * per_word, np.uint8)
    padded[: codes.size] = codes
    bits = np.empty((words, width), bool)
    bits[:, 0::2] = (padded & 1).reshape(words, per_word).astype(bool)
    bits[:, 1::2] = (padded >> 1).reshape(words, per_word).astype(bool)
    return bits


def bits_to_codes(bits: np.ndarray, count: int) -> np.ndarray:
    bits = np.asarray(bits, bool)
    codes = bits[:, 0::2].astype(np.uint8) | (bits[:, 1::2].astype(np.uint8) << 1)
    return codes.ravel()[:count]


def bank_from_codes(codes, width: int = DEFAULT_WIDTH) -> RomBankSpec:
    return RomBankSpec(codes_to_bits(codes, width))


def banks_from_matrix(m: TernaryMatrix, height: int = 1024, width: int = DEFAULT_WIDTH) -> list[RomBankSpec]:
    """Split a whole matrix (row-major code stream) into banks of at most ``height`` words."""
    bits = codes_to_bits(m.codes(), width)
    return [RomBankSpec(bits[i:i + height]) for i in range(0, max(len(bits), 1), height) if len(bits[i:i + height])]


def random_bank(rng: np.random.Generator, height: int, width: int, zero_bit_ratio: float) -> RomBankSpec:
    """Bank with each bit set independently with probability ``1 - zero_bit_ratio``."""
    if not 0.0 <= zero_bit_ratio <= 1.0:
        raise DomainError(f"zero_bit_ratio must be in [0, 1], got {zero_bit_ratio}")
    return RomBankSpec(rng.random((height, width)) < (1.0 - zero_bit_ratio))


def random_ternary_bank(rng: np.random.Generator, height: int, width: int, zero_value_ratio: float) -> RomBankSpec:
    """Bank holding i.i.d. ternary weights (the bit pattern real weight banks have)."""
    n = height * width // 2
    u = rng.random(n)
    sign = rng.random(n) < 0.5
    codes = np.where(u < zero_value_ratio, 0, np.where(sign, 1, 2)).astype(np.uint8)
    return bank_from_codes(codes, width)


def pack_bank(bank: RomBankSpec) -> bytes:
    """Serialize bits row-major, LSB first (for hashing / determinism checks)."""
    return np.packbits(bank.bits, bitorder="little").tobytes()


__all__ = [
    "RomBankSpec", "MAX_BANK_BITS", "DEFAULT_WIDTH", "address_width", "codes_to_bits", "bits_to_codes",
    "bank_from_codes", "banks_from_matrix", "random_bank", "random_ternary_bank", "pack_bank",
]
