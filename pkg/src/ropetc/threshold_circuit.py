"""Gate-level threshold circuits for the integer primitives behind float ops.

Circuits are DAGs of INPUT, NOT, AND, OR, MAJORITY and THRESHOLD(k) gates
with unbounded fan-in.  A gate's input list may repeat a node; repeats act
as integer weights for MAJORITY and THRESHOLD.  The builders produce
levelled circuits whose depth does not depend on operand width or count.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import CircuitError, FormatError, WidthMismatch

KINDS = ("INPUT", "NOT", "AND", "OR", "MAJORITY", "THRESHOLD")


@dataclass(frozen=True)
class Gate:
    id: int
    kind: str
    inputs: tuple[int, ...] = ()
    k: Optional[int] = None  # THRESHOLD only

    def label(self) -> str:
        return f"THRESHOLD({self.k})" if self.kind == "THRESHOLD" else self.kind


@dataclass(frozen=True)
class Circuit:
    gates: tuple[Gate, ...]
    input_width: int
    outputs: tuple[int, ...]

    def __post_init__(self):
        n_inputs = 0
        for idx, g in enumerate(self.gates):
            if g.id != idx:
                raise CircuitError(f"gate ids must be 0..N-1 in order, found {g.id} at {idx}")
            if g.kind not in KINDS:
                raise CircuitError(f"unknown gate kind {g.kind!r}")
            if g.kind == "INPUT":
                if g.inputs:
                    raise CircuitError("INPUT gates take no inputs")
                n_inputs += 1
                continue
            if not g.inputs:
                raise CircuitError(f"gate {idx} ({g.kind}) has no inputs")
            if g.kind == "NOT" and len(g.inputs) != 1:
                raise CircuitError(f"NOT gate {idx} must have fan-in 1")
            if g.kind == "THRESHOLD" and (g.k is None or g.k < 0):
                raise CircuitError(f"THRESHOLD gate {idx} needs k >= 0")
            if any(not 0 <= i < idx for i in g.inputs):
                raise CircuitError(f"gate {idx} reads a later or missing node")
        if n_inputs != self.input_width:
            raise CircuitError(f"declared {self.input_width} inputs, found {n_inputs}")
        if any(not 0 <= o < len(self.gates) for o in self.outputs):
            raise CircuitError("output refers to a missing node")

    @property
    def input_ids(self) -> list[int]:
        return [g.id for g in self.gates if g.kind == "INPUT"]


def gate_value(kind: str, k: Optional[int], vals: Sequence[int]) -> int:
    ones = sum(vals)
    if kind == "NOT":
        return 1 - vals[0]
    if kind == "AND":
        return int(ones == len(vals))
    if kind == "OR":
        return int(ones > 0)
    if kind == "MAJORITY":
        return int(2 * ones > len(vals))
    if kind == "THRESHOLD":
        return int(ones >= k)
    raise CircuitError(f"cannot evaluate {kind}")


def simulate(c: Circuit, bits: Sequence[int], order: Optional[Sequence[int]] = None) -> list[int]:
    """Evaluate the circuit on one input vector.

    ``order`` may give any topological order of the gate ids; the default is
    the stored order.
    """
    if len(bits) != c.input_width:
        raise WidthMismatch(f"circuit takes {c.input_width} bits, got {len(bits)}")
    values: list[Optional[int]] = [None] * len(c.gates)
    for gid, b in zip(c.input_ids, bits):
        values[gid] = 1 if b else 0
    for gid in (order if order is not None else range(len(c.gates))):
        g = c.gates[gid]
        if g.kind == "INPUT":
            continue
        ins = [values[i] for i in g.inputs]
        if any(v is None for v in ins):
            raise CircuitError(f"order is not topological at gate {gid}")
        values[gid] = gate_value(g.kind, g.k, ins)
    return [values[o] for o in c.outputs]


def simulate_batch(c: Circuit, bits: np.ndarray) -> np.ndarray:
    """Vectorized simulation: ``bits`` has shape (batch, input_width)."""
    bits = np.asarray(bits)
    if bits.ndim != 2 or bits.shape[1] != c.input_width:
        raise WidthMismatch(f"expected shape (batch, {c.input_width}), got {bits.shape}")
    batch = bits.shape[0]
    values: list[Optional[np.ndarray]] = [None] * len(c.gates)
    for col, gid in enumerate(c.input_ids):
        values[gid] = (bits[:, col] != 0).astype(np.int32)
    sums: dict[tuple[int, ...], np.ndarray] = {}
    for g in c.gates:
        if g.kind == "INPUT":
            continue
        if g.kind == "NOT":
            values[g.id] = 1 - values[g.inputs[0]]
            continue
        total = sums.get(g.inputs)
        if total is None:
            total = np.zeros(batch, dtype=np.int32)
            uniq, counts = np.unique(np.asarray(g.inputs), return_counts=True)
            for node, cnt in zip(uniq.tolist(), counts.tolist()):
                total += values[node] * cnt if cnt != 1 else values[node]
            sums[g.inputs] = total
        fan = len(g.inputs)
        if g.kind == "AND":
            out = total == fan
        elif g.kind == "OR":
            out = total > 0
        elif g.kind == "MAJORITY":
            out = 2 * total > fan
        else:
            out = total >= g.k
        values[g.id] = out.astype(np.int32)
    if not c.outputs:
        return np.zeros((batch, 0), dtype=np.int32)
    return np.stack([values[o] for o in c.outputs], axis=1)


def node_depths(c: Circuit) -> list[int]:
    depth = [0] * len(c.gates)
    for g in c.gates:
        if g.kind != "INPUT":
            depth[g.id] = 1 + max(depth[i] for i in g.inputs)
    return depth


def measure(c: Circuit) -> tuple[int, int]:
    """(depth, size): longest path to an output in non-INPUT gates, gate count."""
    depth = node_depths(c)
    return (max((depth[o] for o in c.outputs), default=0), len(c.gates))


# -- construction ------------------------------------------------------------


class CircuitBuilder:
    """Append-only DAG builder with structural hashing of identical gates."""

    def __init__(self):
        self._gates: list[Gate] = []
        self._depth: list[int] = []
        self._seen: dict[tuple, int] = {}
        self._const0: Optional[int] = None

    def input(self) -> int:
        gid = len(self._gates)
        self._gates.append(Gate(gid, "INPUT"))
        self._depth.append(0)
        return gid

    def inputs(self, count: int) -> list[int]:
        return [self.input() for _ in range(count)]

    def gate(self, kind: str, inputs: Iterable[int], k: Optional[int] = None) -> int:
        inputs = tuple(inputs)
        key = (kind, inputs, k)
        hit = self._seen.get(key)
        if hit is not None:
            return hit
        gid = len(self._gates)
        self._gates.append(Gate(gid, kind, inputs, k))
        self._depth.append(1 + max(self._depth[i] for i in inputs))
        self._seen[key] = gid
        return gid

    def NOT(self, x: int) -> int:
        return self.gate("NOT", (x,))

    def AND(self, *xs: int) -> int:
        return self.gate("AND", xs)

    def OR(self, *xs: int) -> int:
        return self.gate("OR", xs)

    def THRESHOLD(self, k: int, xs: Iterable[int]) -> int:
        return self.gate("THRESHOLD", xs, k)

    def depth(self, node: int) -> int:
        return self._depth[node]

    def const0(self) -> int:
        """A node that is always 0 (a threshold above its fan-in)."""
        if self._const0 is None:
            if not self._gates:
                raise CircuitError("constants need at least one input node")
            self._const0 = self.THRESHOLD(2, (0,))
        return self._const0

    def pad(self, node: int, target: int) -> int:
        """Delay ``node`` to exactly depth ``target`` with fan-in-1 AND buffers."""
        if self._depth[node] > target:
            raise CircuitError(f"node at depth {self._depth[node]} exceeds target {target}")
        while self._depth[node] < target:
            gid = len(self._gates)
            self._gates.append(Gate(gid, "AND", (node,)))
            self._depth.append(self._depth[node] + 1)
            node = gid
        return node

    def build(self, outputs: Sequence[int], level: Optional[int] = None) -> Circuit:
        outs = [self.pad(o, level) for o in outputs] if level is not None else list(outputs)
        width = sum(1 for g in self._gates if g.kind == "INPUT")
        return Circuit(tuple(self._gates), width, tuple(outs))


def parity(cb: CircuitBuilder, xs: Sequence[int]) -> int:
    """XOR of ``xs`` in depth 4: OR over odd j of [count >= j and not count >= j+1]."""
    f = len(xs)
    th = [cb.THRESHOLD(j, xs) for j in range(1, f + 2)]
    terms = [cb.AND(th[j - 1], cb.NOT(th[j])) for j in range(1, f + 1, 2)]
    return cb.OR(*terms)


ADDER_DEPTH = 7
COMPARATOR_DEPTH = 6
ITERATED_ADD_DEPTH = 11


def lookahead_add(cb: CircuitBuilder, a: Sequence[int], b: Sequence[int]) -> list[int]:
    """Unsigned a + b (LSB first, equal widths): w + 1 output nodes.

    Generate/propagate at depth 1, every carry as an OR of ANDs at depth 3,
    sum bits as 3-input parities on top.
    """
    w = len(a)
    if len(b) != w or w < 1:
        raise CircuitError("lookahead_add needs two operands of equal positive width")
    gen = [cb.AND(a[i], b[i]) for i in range(w)]
    prop = [cb.OR(a[i], b[i]) for i in range(w)]
    carry = [None]
    for i in range(1, w + 1):
        terms = [cb.AND(gen[j], *prop[j + 1:i]) for j in range(i)]
        carry.append(cb.OR(*terms))
    out = [parity(cb, [a[0], b[0]])]
    out += [parity(cb, [a[i], b[i], carry[i]]) for i in range(1, w)]
    out.append(carry[w])
    return out


def build_adder(width: int) -> Circuit:
    """Inputs a_0..a_{w-1}, b_0..b_{w-1} (LSB first); outputs w + 1 sum bits."""
    if width < 1:
        raise CircuitError("width must be >= 1")
    cb = CircuitBuilder()
    a, b = cb.inputs(width), cb.inputs(width)
    return cb.build(lookahead_add(cb, a, b), level=ADDER_DEPTH)


def build_comparator(width: int) -> Circuit:
    """One output: ``a <= b`` for unsigned LSB-first operands."""
    if width < 1:
        raise CircuitError("width must be >= 1")
    cb = CircuitBuilder()
    a, b = cb.inputs(width), cb.inputs(width)
    na = [cb.NOT(x) for x in a]
    nb = [cb.NOT(x) for x in b]
    eq = [cb.OR(cb.AND(a[j], b[j]), cb.AND(na[j], nb[j])) for j in range(width)]
    greater = [cb.AND(a[i], nb[i], *eq[i + 1:]) for i in range(width)]
    return cb.build([cb.NOT(cb.OR(*greater))], level=COMPARATOR_DEPTH)


def iterated_add_width(count: int, width: int) -> int:
    return width + max(1, math.ceil(math.log2(count)))


def build_iterated_add(count: int, width: int) -> Circuit:
    """Exact sum of ``count`` unsigned ``width``-bit numbers.

    Inputs are number-major, LSB first.  Bit positions are cut into blocks
    of L = ceil(log2 count) positions; each block sum is below 2**(2L), so
    the even blocks and the odd blocks each form one number without
    overlaps.  Block-sum bits come straight from weighted THRESHOLD gates
    (weights as repeated wires), then one lookahead adder combines the two
    numbers.
    """
    if count < 2 or width < 1:
        raise CircuitError("need count >= 2 and width >= 1")
    cb = CircuitBuilder()
    x = [cb.inputs(width) for _ in range(count)]
    out_w = iterated_add_width(count, width)
    L = max(1, math.ceil(math.log2(count)))
    n_blocks = -(-width // L)
    placed: list[list[int]] = [[None] * out_w, [None] * out_w]
    for t in range(n_blocks):
        lo, hi = t * L, min(t * L + L, width)
        for q in range(2 * L):
            pos = lo + q
            if pos >= out_w:
                break
            wires = [x[j][i] for j in range(count) for i in range(lo, min(hi, lo + q + 1)) for _ in range(1 << (i - lo))]
            top = len(wires)  # max of the weighted partial sum
            step = 1 << (q + 1)
            terms = []
            for r in range(top // step + 1):
                upper = cb.THRESHOLD(r * step + (1 << q), wires)
                over = cb.THRESHOLD((r + 1) * step, wires)
                terms.append(cb.AND(upper, cb.NOT(over)))
            placed[t % 2][pos] = cb.OR(*terms)
    zero_node = cb.const0()
    even = [z if z is not None else zero_node for z in placed[0]]
    odd = [z if z is not None else zero_node for z in placed[1]]
    total = lookahead_add(cb, even, odd)[:out_w]
    return cb.build(total, level=ITERATED_ADD_DEPTH)


BUILDERS = {
    "adder": build_adder,
    "comparator": build_comparator,
    "iterated_add": build_iterated_add,
}


# -- integer packing helpers ---------------------------------------------------


def to_bits(value: int, width: int) -> list[int]:
    return [(value >> i) & 1 for i in range(width)]


def from_bits(bits: Sequence[int]) -> int:
    return sum(int(b) << i for i, b in enumerate(bits))


# -- text format -----------------------------------------------------------------

_HEADER = re.compile(r"^inputs=(\d+)\s+outputs=([\d,]*)$")
_KIND = re.compile(r"^(INPUT|NOT|AND|OR|MAJORITY|THRESHOLD\((\d+)\))$")


def export_circuit(c: Circuit) -> str:
    lines = [f"inputs={c.input_width} outputs=" + ",".join(map(str, c.outputs))]
    for g in c.gates:
        lines.append(" ".join([str(g.id), g.label(), *map(str, g.inputs)]))
    return "\n".join(lines) + "\n"


def import_circuit(text: str) -> Circuit:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty circuit text")
    head = _HEADER.match(lines[0])
    if not head:
        raise FormatError(f"bad circuit header {lines[0]!r}")
    width = int(head.group(1))
    outputs = tuple(int(t) for t in head.group(2).split(",") if t)
    gates = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) < 2:
            raise FormatError(f"bad gate line {ln!r}")
        kind = _KIND.match(parts[1])
        if not kind:
            raise FormatError(f"bad gate kind in {ln!r}")
        try:
            gid = int(parts[0])
            ins = tuple(int(t) for t in parts[2:])
        except ValueError:
            raise FormatError(f"bad gate line {ln!r}") from None
        if kind.group(2) is not None:
            gates.append(Gate(gid, "THRESHOLD", ins, int(kind.group(2))))
        else:
            gates.append(Gate(gid, kind.group(1), ins))
    try:
        return Circuit(tuple(gates), width, outputs)
    except CircuitError as exc:
        raise FormatError(str(exc)) from None
