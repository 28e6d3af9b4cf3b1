from __future__ import annotations

import itertools
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ropetc.errors import CircuitError, FormatError, WidthMismatch
from ropetc.threshold_circuit import (
    ADDER_DEPTH,
    COMPARATOR_DEPTH,
    ITERATED_ADD_DEPTH,
    Circuit,
    CircuitBuilder,
    Gate,
    build_adder,
    build_comparator,
    build_iterated_add,
    export_circuit,
    from_bits,
    gate_value,
    import_circuit,
    iterated_add_width,
    measure,
    simulate,
    simulate_batch,
    to_bits,
)


def test_gate_values():
    assert gate_value("MAJORITY", None, [1, 1, 0]) == 1
    assert gate_value("MAJORITY", None, [1, 0]) == 0
    assert gate_value("THRESHOLD", 2, [1, 0, 1]) == 1
    assert gate_value("THRESHOLD", 0, [0]) == 1
    assert gate_value("AND", None, [1, 1]) == 1
    assert gate_value("OR", None, [0, 0]) == 0


def test_repeated_wires_are_weights():
    c = Circuit((Gate(0, "INPUT"), Gate(1, "INPUT"), Gate(2, "THRESHOLD", (0, 0, 0, 1), 3)), 2, (2,))
    assert simulate(c, [1, 0]) == [1]
    assert simulate(c, [0, 1]) == [0]


def test_measure_examples():
    assert measure(Circuit((Gate(0, "INPUT"),), 1, (0,))) == (0, 1)
    assert measure(Circuit((Gate(0, "INPUT"), Gate(1, "NOT", (0,))), 1, (1,))) == (1, 2)


def test_validation():
    with pytest.raises(CircuitError):
        Circuit((Gate(0, "INPUT"), Gate(1, "NOT", (0, 0))), 1, (1,))
    with pytest.raises(CircuitError):
        Circuit((Gate(0, "INPUT"), Gate(1, "AND", (2,))), 1, (1,))
    with pytest.raises(CircuitError):
        Circuit((Gate(0, "INPUT"), Gate(1, "THRESHOLD", (0,))), 1, (1,))
    with pytest.raises(WidthMismatch):
        simulate(build_adder(2), [0, 1])


@st.composite
def random_circuits(draw):
    n_in = draw(st.integers(1, 5))
    gates = [Gate(i, "INPUT") for i in range(n_in)]
    for gid in range(n_in, n_in + draw(st.integers(1, 15))):
        kind = draw(st.sampled_from(["NOT", "AND", "OR", "MAJORITY", "THRESHOLD"]))
        fan = 1 if kind == "NOT" else draw(st.integers(1, 5))
        ins = tuple(draw(st.lists(st.integers(0, gid - 1), min_size=fan, max_size=fan)))
        k = draw(st.integers(0, 6)) if kind == "THRESHOLD" else None
        gates.append(Gate(gid, kind, ins, k))
    outs = tuple(draw(st.lists(st.integers(0, len(gates) - 1), min_size=1, max_size=3)))
    return Circuit(tuple(gates), n_in, outs)


def naive(c: Circuit, bits, node: int) -> int:
    g = c.gates[node]
    if g.kind == "INPUT":
        return bits[c.input_ids.index(node)]
    vals = [naive(c, bits, i) for i in g.inputs]
    return gate_value(g.kind, g.k, vals)


@given(random_circuits(), st.data())
def test_simulation_matches_recursive_evaluator(c, data):
    bits = data.draw(st.lists(st.integers(0, 1), min_size=c.input_width, max_size=c.input_width))
    want = [naive(c, bits, o) for o in c.outputs]
    assert simulate(c, bits) == want
    assert simulate_batch(c, np.array([bits])).tolist()[0] == want


def test_topological_order_independence():
    c = build_adder(3)
    rng = random.Random(0)
    # a different topological order: Kahn's algorithm with random choice
    indeg = {g.id: len(set(g.inputs)) for g in c.gates}
    users = {g.id: set() for g in c.gates}
    for g in c.gates:
        for i in set(g.inputs):
            users[i].add(g.id)
    ready = [g for g, d in indeg.items() if d == 0]
    order = []
    while ready:
        g = ready.pop(rng.randrange(len(ready)))
        order.append(g)
        for u in users[g]:
            indeg[u] -= 1
            if indeg[u] == 0:
                ready.append(u)
    bits = [1, 0, 1, 1, 1, 0]
    assert simulate(c, bits, order) == simulate(c, bits)
    with pytest.raises(CircuitError):
        simulate(c, bits, list(reversed(range(len(c.gates)))))


def test_golden_sizes():
    assert measure(build_adder(1)) == (7, 19)
    assert measure(build_adder(4)) == (7, 70)
    assert measure(build_comparator(4)) == (6, 34)
    assert measure(build_iterated_add(3, 3)) == (11, 129)
    assert measure(build_iterated_add(16, 8)) == (11, 821)


@pytest.mark.parametrize("w", range(1, 17))
def test_depth_is_constant_in_width(w):
    assert measure(build_adder(w))[0] == ADDER_DEPTH
    assert measure(build_comparator(w))[0] == COMPARATOR_DEPTH


@pytest.mark.parametrize("n", range(2, 17))
def test_iterated_add_depth_is_constant_in_count(n):
    assert measure(build_iterated_add(n, 4))[0] == ITERATED_ADD_DEPTH


def _all_inputs(n: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64)[:, ::-1]


@pytest.mark.parametrize("w", range(1, 9))
def test_adder_and_comparator_exhaustive(w):
    bits = _all_inputs(2 * w)
    weights = 1 << np.arange(w)
    a, b = bits[:, :w] @ weights, bits[:, w:] @ weights
    sums = simulate_batch(build_adder(w), bits) @ (1 << np.arange(w + 1))
    assert np.array_equal(sums, a + b)
    le = simulate_batch(build_comparator(w), bits)[:, 0]
    assert np.array_equal(le, (a <= b).astype(le.dtype))


@pytest.mark.parametrize("n,w", [(2, 4), (3, 3), (4, 4), (6, 3), (9, 2)])
def test_iterated_add_exhaustive(n, w):
    bits = _all_inputs(n * w)
    nums = bits.reshape(len(bits), n, w) @ (1 << np.arange(w))
    out = simulate_batch(build_iterated_add(n, w), bits) @ (1 << np.arange(iterated_add_width(n, w)))
    assert np.array_equal(out, nums.sum(axis=1))


def test_bits_helpers():
    assert to_bits(6, 4) == [0, 1, 1, 0]
    assert from_bits([0, 1, 1, 0]) == 6


def test_builder_structural_hashing():
    cb = CircuitBuilder()
    x, y = cb.inputs(2)
    assert cb.AND(x, y) == cb.AND(x, y)
    assert measure(cb.build([cb.AND(x, y)]))[1] == 3


def test_export_import_round_trip():
    c = build_iterated_add(3, 2)
    assert import_circuit(export_circuit(c)) == c
    for bad in ("", "inputs=1 outputs=0\n0 FOO", "inputs=1 outputs=1\n0 INPUT", "inputs=x"):
        with pytest.raises(FormatError):
            import_circuit(bad)
