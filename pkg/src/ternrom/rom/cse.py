"""Common-subexpression elimination for two-level ROM networks.

Two passes:

1. Structural hashing. Identical gates merge, which shares each decoder
   minterm across every output column that uses it.
2. OR-plane divisor extraction. Each output OR is a set of literals (minterms
   or previously extracted ORs). The pair of literals that co-occurs in the
   most outputs becomes a new OR2 gate, and each output using both literals
   takes the new gate instead.

Extracting a pair shared by ``c`` outputs costs one OR2 gate (6 transistors).
It removes one fan-in from each of the ``c`` outputs, which saves at least 2
transistors per output. Requiring ``c >= 4`` therefore always gives a net
saving.

Extraction runs in rounds. Each round finds every literal's best partner
from a co-occurrence matrix. Candidates are ranked by (count descending,
lower literal, higher literal), and disjoint pairs are taken greedily.
Rounds continue until no pair reaches the threshold.
"""

from __future__ import annotations

import numpy as np

from .cost import transistor_count
from .network import Kind, LogicNetwork, rebuild, same_structure

MIN_SHARED = 4
_BLOCK = 1024


def extract_pairs(m: np.ndarray, min_count: int = MIN_SHARED):
    """Greedy two-literal divisor extraction on a boolean (rows x literals) matrix.

    Returns ``(m_out, pairs)``. ``m_out`` has one extra column per extracted
    pair, in extraction order. ``pairs[i]`` holds the two column indices
    combined into column ``m.shape[1] + i``. Those indices may point at
    earlier pair columns.
    """
    m = np.array(m, dtype=bool, copy=True)
    pairs: list[tuple[int, int]] = []
    while True:
        active = np.flatnonzero(m.any(0))
        n = active.size
        if n < 2:
            break
        lits = np.ascontiguousarray(m[:, active].T).astype(np.float32)
        best = np.zeros(n, np.float32)
        arg = np.zeros(n, np.int64)
        for i0 in range(0, n, _BLOCK):
            i1 = min(n, i0 + _BLOCK)
            co = lits[i0:i1] @ lits.T
            idx = np.arange(i1 - i0)
            co[idx, idx + i0] = -1
            arg[i0:i1] = co.argmax(1)
            best[i0:i1] = co[idx, arg[i0:i1]]
        cand = np.flatnonzero(best >= min_count)
        if cand.size == 0:
            break
        lo = np.minimum(cand, arg[cand])
        hi = np.maximum(cand, arg[cand])
        order = np.lexsort((hi, lo, -best[cand]))
        used = np.zeros(n, bool)
        chosen = []
        for o in order:
            x, y = lo[o], hi[o]
            if used[x] or used[y]:
                continue
            used[x] = used[y] = True
            chosen.append((int(active[x]), int(active[y])))
        ia = np.array([c[0] for c in chosen])
        ib = np.array([c[1] for c in chosen])
        both = m[:, ia] & m[:, ib]
        m[:, ia] &= ~both
        m[:, ib] &= ~both
        m = np.concatenate([m, both], axis=1)
        pairs.extend(chosen)
    return m, pairs


def _or_rows(net: LogicNetwork) -> list[int]:
    """Output-driving OR gates that feed no other OR gate (the rows of the OR plane)."""
    feeds_or = set()
    for n, k in enumerate(net.kinds):
        if k == Kind.OR:
            feeds_or.update(net.fanins[n])
    rows = []
    seen = set()
    for o in net.outputs:
        if net.kinds[o] == Kind.OR and o not in feeds_or and o not in seen:
            seen.add(o)
            rows.append(o)
    return rows


def extract_or_plane(net: LogicNetwork, min_count: int = MIN_SHARED) -> LogicNetwork:
    rows = _or_rows(net)
    if not rows:
        return net
    literals = sorted({f for r in rows for f in net.fanins[r]})
    col = {lit: i for i, lit in enumerate(literals)}
    m = np.zeros((len(rows), len(literals)), bool)
    for i, r in enumerate(rows):
        m[i, [col[f] for f in net.fanins[r]]] = True
    m_out, pairs = extract_pairs(m, min_count)
    if not pairs:
        return net

    kinds = list(net.kinds)
    fanins = list(net.fanins)
    col_node = list(literals)
    for a, b in pairs:
        kinds.append(Kind.OR)
        fanins.append((col_node[a], col_node[b]))
        col_node.append(len(kinds) - 1)
    new_row_node = {}
    for i, r in enumerate(rows):
        kinds.append(Kind.OR)
        fanins.append(tuple(col_node[c] for c in np.flatnonzero(m_out[i])))
        new_row_node[r] = len(kinds) - 1
    outputs = tuple(new_row_node.get(o, o) for o in net.outputs)
    # the old row gates are now dead and disappear in rebuild()
    return rebuild(net, kinds, fanins, outputs)


def cse_optimize(net: LogicNetwork, min_count: int = MIN_SHARED) -> LogicNetwork:
    """Share decoder lines and extract common OR divisors.

    The result is functionally identical and never costs more transistors.
    If no saving is found, the input object itself is returned.
    """
    hashed = rebuild(net, net.kinds, net.fanins, net.outputs)
    out = extract_or_plane(hashed, min_count)
    if same_structure(out, net) or transistor_count(out) >= transistor_count(net):
        return net
    return out
