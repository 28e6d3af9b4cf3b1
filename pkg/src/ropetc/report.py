"""Depth report for one traced forward pass."""

from __future__ import annotations

import json
import random
from typing import Optional

from .depth_accountant import FORMULA_TEXT, assert_constant_depth, layer_formula
from .fp_core import FpNum
from .rope_transformer import TransformerModel, forward_with_trace, random_matrix
from .tensor import FpMatrix


def default_input(model: TransformerModel, seed: int = 0) -> FpMatrix:
    cfg = model.config
    return random_matrix(cfg.n, cfg.d, cfg.p, random.Random(seed))


def depth_report(model: TransformerModel, X: FpMatrix, ln_epsilon: Optional[FpNum] = None) -> dict:
    res = forward_with_trace(X, model, ln_epsilon)
    components = []
    for comp in res.components:
        traced = comp.trace.depth()
        expected = layer_formula(comp.kind)
        components.append({
            "name": comp.name,
            "kind": comp.kind,
            "traced": str(traced),
            "traced_terms": traced.to_json(),
            "closed_form": FORMULA_TEXT[comp.kind],
            "expected": str(expected),
            "equal": traced == expected,
            "size": comp.trace.size,
        })
    total = res.trace.depth()
    expected = layer_formula("transformer", model.m)
    return {
        "n": model.config.n,
        "d": model.config.d,
        "p": model.config.p,
        "m": model.m,
        "components": components,
        "transformer": {
            "traced": str(total),
            "traced_terms": total.to_json(),
            "closed_form": FORMULA_TEXT["transformer"],
            "expected": str(expected),
            "equal": total == expected,
            "constant_depth": assert_constant_depth(total, model.m),
            "size": sum(c["size"] for c in components),
        },
        "all_equal": total == expected and all(c["equal"] for c in components),
    }


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, ensure_ascii=False) + "\n"


def report_text(report: dict) -> str:
    lines = [f"model: n={report['n']} d={report['d']} p={report['p']} m={report['m']}"]
    for c in report["components"]:
        verdict = "OK" if c["equal"] else "MISMATCH"
        lines.append(
            f"{c['name']:<8} {c['kind']:<10} traced: {c['traced']}  closed form: {c['closed_form']}"
            f"  [{verdict}]  size={c['size']}"
        )
    t = report["transformer"]
    verdict = "OK" if t["equal"] else "MISMATCH"
    lines.append(f"total    transformer traced: {t['traced']}  closed form: {t['closed_form']}  [{verdict}]")
    lines.append(f"constant depth: {'yes' if t['constant_depth'] else 'no'}  size={t['size']}")
    return "\n".join(lines) + "\n"
