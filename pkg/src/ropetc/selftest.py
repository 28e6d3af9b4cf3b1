"""Quick invariant checks bundled with the package (``ropetc selftest``)."""

from __future__ import annotations

import itertools
import random
from fractions import Fraction
from typing import Callable

from .depth_accountant import assert_constant_depth, layer_formula
from .fp_core import FpNum, fp_add, fp_div, fp_iter_add, fp_leq, fp_mul, round_p
from .formula_bench import (
    FORMULA_KINDS,
    eval_bool,
    generate_corpus,
    parse_bool_infix,
    parse_bool_postfix,
    parse_formula,
    to_infix,
    to_postfix,
)
from .rope_transformer import forward_with_trace, random_matrix, random_model
from .threshold_circuit import build_adder, build_comparator, build_iterated_add, from_bits, measure, simulate
from .transcendental import fp_cos, fp_exp, fp_sin, fp_sqrt


def _random_fp(rng: random.Random, p: int, emin: int = -8, emax: int = 8) -> FpNum:
    if rng.random() < 0.05:
        return FpNum(0, 0, p)
    m = rng.randrange(1 << (p - 1), 1 << p)
    e = rng.randrange(max(emin, -(1 << p)), min(emax, 1 << p))
    return FpNum(m if rng.random() < 0.5 else -m, e, p)


def check_float_examples() -> None:
    assert str(round_p(1, 4)) == "8*2^-3@4"
    assert str(round_p(Fraction(5, 2), 2)) == "2*2^0@2"
    p = 8
    one = round_p(1, p)
    assert fp_add(one, one).value() == 2
    three = round_p(3, p)
    assert fp_div(three, three) == one
    assert fp_div(one, round_p(4, p)).value() == Fraction(1, 4)


def check_float_algebra() -> None:
    rng = random.Random(1)
    for _ in range(2000):
        p = rng.randint(5, 10)
        a, b = _random_fp(rng, p), _random_fp(rng, p)
        assert fp_add(a, b) == fp_add(b, a)
        assert fp_mul(a, b) == fp_mul(b, a)
        assert fp_mul(a, b) == round_p(a.value() * b.value(), p)
        assert fp_iter_add([a, b]) == round_p(a.value() + b.value(), p)
        assert fp_leq(a, a)


def check_transcendentals() -> None:
    rng = random.Random(2)
    p = 16
    tol = Fraction(1, 1 << (p - 2))
    for _ in range(200):
        x = round_p(Fraction(rng.randint(-2 ** 20, 2 ** 20), 2 ** 16), p)
        s, c = fp_sin(x).value(), fp_cos(x).value()
        assert abs(s * s + c * c - 1) <= tol
        y = round_p(Fraction(rng.randint(1, 2 ** 24), 2 ** 8), p)
        r = fp_sqrt(y).value()
        assert abs(r * r - y.value()) <= 2 * tol * y.value()
        e1 = fp_exp(round_p(Fraction(rng.randint(-2 ** 10, 2 ** 10), 2 ** 8), p))
        assert e1.value() > 0


def check_depth_formulas() -> None:
    for m in range(3):
        model = random_model(3, 4, m, 12, seed=m, g_kinds=["layernorm", "mlp", "identity"][: m + 1])
        X = random_matrix(3, 4, 12, random.Random(m))
        res = forward_with_trace(X, model)
        total = res.trace.depth()
        assert total == layer_formula("transformer", m), str(total)
        assert assert_constant_depth(total, m)
        for comp in res.components:
            assert comp.trace.depth() == layer_formula(comp.kind), comp.name


def check_circuits() -> None:
    w = 3
    adder, comp = build_adder(w), build_comparator(w)
    for a, b in itertools.product(range(1 << w), repeat=2):
        bits = [(a >> i) & 1 for i in range(w)] + [(b >> i) & 1 for i in range(w)]
        assert from_bits(simulate(adder, bits)) == a + b
        assert simulate(comp, bits) == [int(a <= b)]
    it = build_iterated_add(3, 2)
    for xs in itertools.product(range(4), repeat=3):
        bits = [(x >> i) & 1 for x in xs for i in range(2)]
        assert from_bits(simulate(it, bits)) == sum(xs)
    assert measure(adder)[0] == measure(build_adder(6))[0]


def check_formulas() -> None:
    f = parse_bool_infix("((1∧0)∨(¬0))")
    assert eval_bool(f) == 1
    assert parse_bool_postfix("0¬1∧") == parse_bool_infix("((¬0)∧1)")
    for kind in FORMULA_KINDS:
        for text in generate_corpus(kind, 50, 6, seed=3):
            ast = parse_formula(kind, text)
            if kind == "bool-infix":
                assert to_infix(ast) == text
                assert eval_bool(parse_bool_postfix(to_postfix(ast))) == eval_bool(ast)
            elif kind == "bool-postfix":
                assert to_postfix(ast) == text


CHECKS: list[tuple[str, Callable[[], None]]] = [
    ("float examples", check_float_examples),
    ("float algebra", check_float_algebra),
    ("transcendentals", check_transcendentals),
    ("depth formulas", check_depth_formulas),
    ("threshold circuits", check_circuits),
    ("formula round trips", check_formulas),
]


def run_selftest(emit: Callable[[str], None] = print) -> bool:
    ok = True
    for name, fn in CHECKS:
        try:
            fn()
        except Exception as exc:  # report every failing check, keep going
            ok = False
            emit(f"FAIL {name}: {type(exc).__name__}: {exc}")
        else:
            emit(f"PASS {name}")
    return ok
