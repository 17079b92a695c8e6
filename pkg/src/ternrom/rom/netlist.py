"""Verilog-subset netlist emission and a small evaluator for the emitted text.

Only ``module`` / ``input`` / ``output`` / ``wire`` / ``assign`` appear. Each
assignment is one of::

    assign x = 1'b0;
    assign x = ~addr[i];
    assign x = a & b & ...;
    assign x = a | b | ...;
    assign x = a;

Net names: ``addr[i]`` address bits, ``na<i>`` inverted address bits,
``m<address>`` shared decoder lines, ``s<id>`` other internal gates and
``data[j]`` outputs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ..errors import FormatError
from .network import Kind, LogicNetwork, masks_to_table


def _names(net: LogicNetwork) -> dict[int, str]:
    a = net.address_width
    names = {0: "1'b0"}
    for b in range(a):
        names[1 + b] = f"addr[{b}]"
        names[1 + a + b] = f"na{b}"
    taken = set()
    live = net.live_nodes()
    for n in np.flatnonzero(live):
        n = int(n)
        if n in names:
            continue
        addr = net.minterm_address(n)
        if addr is not None and addr not in taken:
            taken.add(addr)
            names[n] = f"m{addr}"
        else:
            names[n] = f"s{n}"
    return names


def _sanitize(name: str) -> str:
    s = re.sub(r"[^A-Za-z0-9_]", "_", name)
    return s if s and not s[0].isdigit() else "_" + s


def emit_netlist(net: LogicNetwork, name: str = "rom") -> str:
    a, w = net.address_width, net.width
    names = _names(net)
    live = net.live_nodes()
    internal = [int(n) for n in np.flatnonzero(live) if n > 2 * a or (a < n <= 2 * a)]
    lines = [
        f"// height {net.height}",
        f"module {_sanitize(name)} (addr, data);",
        f"  input [{a - 1}:0] addr;",
        f"  output [{w - 1}:0] data;",
    ]
    for n in internal:
        lines.append(f"  wire {names[n]};")
    for n in internal:
        k = net.kinds[n]
        fi = net.fanins[n]
        if k == Kind.INV:
            expr = f"~{names[fi[0]]}"
        elif k in (Kind.AND, Kind.OR):
            op = " & " if k == Kind.AND else " | "
            expr = op.join(names[f] for f in fi)
        else:
            raise FormatError(f"cannot emit node kind {k!r}")
        lines.append(f"  assign {names[n]} = {expr};")
    for j, o in enumerate(net.outputs):
        lines.append(f"  assign data[{j}] = {names[o]};")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


_RE_HEIGHT = re.compile(r"^//\s*height\s+(\d+)$")
_RE_MODULE = re.compile(r"^module\s+(\w+)\s*\(addr,\s*data\);$")
_RE_PORT = re.compile(r"^(input|output)\s+\[(\d+):0\]\s+(addr|data);$")
_RE_WIRE = re.compile(r"^wire\s+(\w+);$")
_RE_ASSIGN = re.compile(r"^assign\s+([\w\[\]]+)\s*=\s*(.+);$")
_RE_TOKEN = re.compile(r"^(~?)([A-Za-z_]\w*(?:\[\d+\])?|1'b0)$")


@dataclass(frozen=True)
class ParsedNetlist:
    name: str
    height: int | None
    address_width: int
    width: int
    assigns: tuple  # (lhs, op, operands)

    def evaluate_all(self, height: int | None = None) -> np.ndarray:
        h = height or self.height or (1 << self.address_width)
        full = (1 << h) - 1
        env: dict[str, int] = {"1'b0": 0}
        for b in range(self.address_width):
            pattern = ((np.arange(h) >> b) & 1).astype(bool)
            env[f"addr[{b}]"] = int.from_bytes(np.packbits(pattern, bitorder="little").tobytes(), "little")
        for lineno, lhs, op, ops in self.assigns:
            try:
                vals = [env[o] for o in ops]
            except KeyError as e:
                raise FormatError(f"net {e.args[0]} used before assignment", offset=lineno) from None
            if op == "~":
                v = full ^ vals[0]
            elif op == "&":
                v = full
                for x in vals:
                    v &= x
            elif op == "|":
                v = 0
                for x in vals:
                    v |= x
            else:
                v = vals[0]
            env[lhs] = v
        try:
            masks = [env[f"data[{j}]"] for j in range(self.width)]
        except KeyError as e:
            raise FormatError(f"output {e.args[0]} never assigned") from None
        return masks_to_table(masks, h)


def parse_netlist(text: str) -> ParsedNetlist:
    """Parse text produced by :func:`emit_netlist`; errors carry the line number."""
    name = None
    height = None
    widths = {}
    wires = set()
    assigns = []
    ended = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        m = _RE_HEIGHT.match(line)
        if m:
            height = int(m.group(1))
            continue
        if line.startswith("//"):
            continue
        if ended:
            raise FormatError("text after endmodule", offset=lineno)
        if line == "endmodule":
            ended = True
            continue
        m = _RE_MODULE.match(line)
        if m:
            name = m.group(1)
            continue
        m = _RE_PORT.match(line)
        if m:
            widths[m.group(3)] = int(m.group(2)) + 1
            continue
        m = _RE_WIRE.match(line)
        if m:
            wires.add(m.group(1))
            continue
        m = _RE_ASSIGN.match(line)
        if not m:
            raise FormatError(f"unrecognized netlist line: {line!r}", offset=lineno)
        lhs, expr = m.group(1), m.group(2).strip()
        if "&" in expr and "|" in expr:
            raise FormatError("mixed & and | in one assignment", offset=lineno)
        op = "&" if "&" in expr else "|" if "|" in expr else None
        parts = [p.strip() for p in (expr.split(op) if op else [expr])]
        operands = []
        for p in parts:
            t = _RE_TOKEN.match(p)
            if not t:
                raise FormatError(f"bad operand {p!r}", offset=lineno)
            if t.group(1):
                if op is not None:
                    raise FormatError("negation only allowed as a whole expression", offset=lineno)
                op = "~"
            operands.append(t.group(2))
        assigns.append((lineno, lhs, op, tuple(operands)))
    if name is None or "addr" not in widths or "data" not in widths:
        raise FormatError("missing module header or port declarations")
    if not ended:
        raise FormatError("missing endmodule")
    return ParsedNetlist(name, height, widths["addr"], widths["data"], tuple(assigns))


def evaluate_netlist(text: str, height: int | None = None) -> np.ndarray:
    return parse_netlist(text).evaluate_all(height)
