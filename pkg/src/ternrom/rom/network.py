"""Gate-level combinational networks for ROM banks.

Node ids are topologically ordered (every fan-in id is smaller than the node
id). The first ``2A + 1`` nodes are fixed for every network of address width
``A``::

    0            constant 0
    1 .. A       address bit i  (node id i + 1)
    A+1 .. 2A    inverted address bit i (node id A + 1 + i)

AND and OR gates follow. A gate with a single fan-in is a plain wire.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from ..errors import DomainError, InvariantError
from .bank import RomBankSpec, address_width


class Kind(IntEnum):
    CONST0 = 0
    ADDR = 1
    INV = 2
    AND = 3
    OR = 4


@dataclass(frozen=True, eq=False)
class LogicNetwork:
    address_width: int
    height: int
    kinds: tuple
    fanins: tuple
    outputs: tuple

    def __post_init__(self):
        a = self.address_width
        if len(self.kinds) != len(self.fanins):
            raise InvariantError("kinds/fanins length mismatch")
        if len(self.kinds) < 2 * a + 1:
            raise InvariantError("network is missing its fixed input nodes")
        for i, o in enumerate(self.outputs):
            if not 0 <= o < len(self.kinds):
                raise InvariantError(f"output {i} references missing node {o}")

    # -- structure ----------------------------------------------------------
    @property
    def width(self) -> int:
        return len(self.outputs)

    @property
    def num_nodes(self) -> int:
        return len(self.kinds)

    def addr_node(self, bit: int) -> int:
        return 1 + bit

    def inv_node(self, bit: int) -> int:
        return 1 + self.address_width + bit

    def live_nodes(self) -> np.ndarray:
        """Boolean mask of nodes reachable from some output."""
        live = np.zeros(self.num_nodes, bool)
        stack = list(set(self.outputs))
        while stack:
            n = stack.pop()
            if live[n]:
                continue
            live[n] = True
            stack.extend(f for f in self.fanins[n] if not live[f])
        return live

    def minterm_address(self, node: int) -> int | None:
        """Address decoded by ``node`` if it is a full decoder minterm, else None."""
        if self.kinds[node] != Kind.AND:
            return None
        a = self.address_width
        fi = self.fanins[node]
        if len(fi) != a:
            return None
        addr = 0
        seen = set()
        for f in fi:
            if 1 <= f <= a:
                bit, val = f - 1, 1
            elif a < f <= 2 * a:
                bit, val = f - 1 - a, 0
            else:
                return None
            if bit in seen:
                return None
            seen.add(bit)
            addr |= val << bit
        return addr

    def decoder_lines(self) -> dict[int, int]:
        """Live decoder minterm nodes, as ``{node id: address}``."""
        live = self.live_nodes()
        out = {}
        for n in np.flatnonzero(live):
            addr = self.minterm_address(int(n))
            if addr is not None:
                out[int(n)] = addr
        return out

    def is_constant_zero(self, column: int) -> bool:
        return self.outputs[column] == 0

    # -- evaluation ---------------------------------------------------------
    def node_masks(self) -> dict[int, int]:
        """Each live node's value over all addresses as a Python-int bitmask.

        Bit ``a`` of a mask is the node's value at address ``a``.
        """
        h, a = self.height, self.address_width
        full = (1 << h) - 1
        addr_masks = []
        for bit in range(a):
            pattern = np.zeros(h, bool)
            pattern[(np.arange(h) >> bit) & 1 == 1] = True
            addr_masks.append(int.from_bytes(np.packbits(pattern, bitorder="little").tobytes(), "little"))
        live = self.live_nodes()
        val: dict[int, int] = {}
        for n in np.flatnonzero(live):
            n = int(n)
            k = self.kinds[n]
            fi = self.fanins[n]
            if k == Kind.CONST0:
                v = 0
            elif k == Kind.ADDR:
                v = addr_masks[n - 1]
            elif k == Kind.INV:
                v = full ^ val[fi[0]] if fi else full ^ addr_masks[n - 1 - a]
            elif k == Kind.AND:
                v = full
                for f in fi:
                    v &= val[f]
            elif k == Kind.OR:
                v = 0
                for f in fi:
                    v |= val[f]
            else:
                raise InvariantError(f"unknown node kind {k}")
            val[n] = v
        return val

    def evaluate_all(self) -> np.ndarray:
        """(height x width) boolean table of outputs at every address."""
        val = self.node_masks()
        return masks_to_table([val[o] for o in self.outputs], self.height)

    def evaluate(self, address: int) -> int:
        if not 0 <= address < self.height:
            raise DomainError(f"address {address} out of range [0, {self.height})")
        table = self.evaluate_all()
        return int.from_bytes(np.packbits(table[address], bitorder="little").tobytes(), "little")


def masks_to_table(masks, height: int) -> np.ndarray:
    nbytes = (height + 7) // 8
    buf = b"".join(m.to_bytes(nbytes, "little") for m in masks)
    cols = np.unpackbits(np.frombuffer(buf, np.uint8).reshape(len(masks), nbytes), axis=1, bitorder="little")
    return cols[:, :height].T.astype(bool).reshape(height, len(masks))


def _base_nodes(a: int):
    kinds = [Kind.CONST0] + [Kind.ADDR] * a + [Kind.INV] * a
    fanins = [()] + [()] * a + [(1 + i,) for i in range(a)]
    return kinds, fanins


def minterm_literals(address: int, a: int) -> tuple:
    """Sorted literal node ids selecting ``address``."""
    return tuple(sorted((1 + b) if (address >> b) & 1 else (1 + a + b) for b in range(a)))


def build_logic_network(bank: RomBankSpec) -> LogicNetwork:
    """Naive two-level realization: every one-bit gets its own minterm AND gate,
    each column ORs its minterms, and empty columns are tied to constant 0."""
    h, w = bank.height, bank.width
    a = address_width(h)
    kinds, fanins = _base_nodes(a)
    lit_cache: dict[int, tuple] = {}
    outputs = []
    bits = bank.bits
    for j in range(w):
        addrs = np.flatnonzero(bits[:, j])
        if addrs.size == 0:
            outputs.append(0)
            continue
        terms = []
        for addr in addrs.tolist():
            lits = lit_cache.get(addr)
            if lits is None:
                lits = lit_cache[addr] = minterm_literals(addr, a)
            kinds.append(Kind.AND)
            fanins.append(lits)
            terms.append(len(kinds) - 1)
        if len(terms) == 1:
            outputs.append(terms[0])
        else:
            kinds.append(Kind.OR)
            fanins.append(tuple(terms))
            outputs.append(len(kinds) - 1)
    return LogicNetwork(a, h, tuple(kinds), tuple(fanins), tuple(outputs))


def rebuild(net: LogicNetwork, kinds, fanins, outputs) -> LogicNetwork:
    """Structurally hash a (topologically ordered) node list into a clean network.

    Gates are canonicalized as (kind, sorted unique fan-ins); identical gates
    merge, single-fan-in gates collapse into wires, constant-0 inputs are
    simplified away and dead nodes are dropped. The fixed input nodes keep
    their ids.
    """
    a = net.address_width
    base = 2 * a + 1
    live = np.zeros(len(kinds), bool)
    stack = list(set(outputs))
    while stack:
        n = stack.pop()
        if live[n]:
            continue
        live[n] = True
        stack.extend(f for f in fanins[n] if not live[f])

    new_kinds, new_fanins = _base_nodes(a)
    remap = list(range(base)) + [-1] * (len(kinds) - base)
    table: dict = {}
    for n in range(base, len(kinds)):
        if not live[n]:
            continue
        k = kinds[n]
        fi = sorted({remap[f] for f in fanins[n]})
        if k == Kind.AND:
            if 0 in fi:
                remap[n] = 0
                continue
        elif k == Kind.OR:
            fi = [f for f in fi if f != 0]
        if not fi:
            # AND of nothing is constant 1, which no ROM network needs
            if k == Kind.AND:
                raise InvariantError(f"AND node {n} has no inputs")
            remap[n] = 0
            continue
        if len(fi) == 1:
            remap[n] = fi[0]
            continue
        key = (k, tuple(fi))
        hit = table.get(key)
        if hit is None:
            new_kinds.append(k)
            new_fanins.append(key[1])
            hit = table[key] = len(new_kinds) - 1
        remap[n] = hit
    new_outputs = tuple(remap[o] for o in outputs)
    return LogicNetwork(a, net.height, tuple(new_kinds), tuple(new_fanins), new_outputs)


def same_structure(x: LogicNetwork, y: LogicNetwork) -> bool:
    return (x.address_width == y.address_width and x.height == y.height and x.kinds == y.kinds
            and x.fanins == y.fanins and x.outputs == y.outputs)
