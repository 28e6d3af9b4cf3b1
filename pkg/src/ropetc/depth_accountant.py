"""Symbolic circuit-depth bookkeeping.

Every defined floating-point operation reports one event to the active
:class:`CostTrace`.  Events recorded inside the same :func:`stage` run in
parallel and cost one stage; stages compose sequentially.  The total is a
:class:`DepthExpr` over the opaque depth constants of the threshold-circuit
constructions, which the closed forms in :func:`layer_formula` are checked
against.
"""

from __future__ import annotations

import contextvars
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

from .errors import IncomparableParallelCosts, TraceError, UnknownKind

D_STD = "d_std"
D_OPLUS = "d_oplus"
D_OTIMES = "d_otimes"
D_EXP = "d_exp"
D_SQRT = "d_sqrt"
D_G = "d_g"

SYMBOLS = (D_STD, D_OPLUS, D_OTIMES, D_EXP, D_SQRT, D_G)
PRETTY = {
    D_STD: "d_std",
    D_OPLUS: "d_⊕",
    D_OTIMES: "d_⊗",
    D_EXP: "d_exp",
    D_SQRT: "d_sqrt",
    D_G: "d_g",
}


@dataclass(frozen=True)
class DepthExpr:
    """Non-negative integer combination of depth symbols plus a constant."""

    terms: tuple[tuple[str, int], ...] = ()
    constant: int = 0

    def __post_init__(self):
        seen = {}
        for sym, coef in self.terms:
            if sym not in SYMBOLS:
                raise UnknownKind(f"unknown depth symbol {sym!r}")
            if coef < 0:
                raise ValueError("depth coefficients must be non-negative")
            seen[sym] = seen.get(sym, 0) + coef
        if self.constant < 0:
            raise ValueError("depth constant must be non-negative")
        canon = tuple((s, seen[s]) for s in SYMBOLS if seen.get(s))
        object.__setattr__(self, "terms", canon)

    @classmethod
    def from_mapping(cls, coeffs: Mapping[str, int], constant: int = 0) -> "DepthExpr":
        return cls(tuple(coeffs.items()), constant)

    @classmethod
    def symbol(cls, name: str) -> "DepthExpr":
        return cls(((name, 1),))

    @property
    def coefficients(self) -> dict[str, int]:
        return dict(self.terms)

    def coefficient(self, name: str) -> int:
        return self.coefficients.get(name, 0)

    def __add__(self, other: "DepthExpr") -> "DepthExpr":
        if not isinstance(other, DepthExpr):
            return NotImplemented
        return DepthExpr(self.terms + other.terms, self.constant + other.constant)

    def __mul__(self, k: int) -> "DepthExpr":
        if not isinstance(k, int) or k < 0:
            return NotImplemented
        return DepthExpr(tuple((s, c * k) for s, c in self.terms), self.constant * k)

    __rmul__ = __mul__

    def dominates(self, other: "DepthExpr") -> bool:
        mine = self.coefficients
        return self.constant >= other.constant and all(
            mine.get(s, 0) >= c for s, c in other.terms
        )

    def join(self, other: "DepthExpr") -> "DepthExpr":
        """Maximum of two parallel costs; defined only under dominance."""
        if self.dominates(other):
            return self
        if other.dominates(self):
            return other
        raise IncomparableParallelCosts(
            f"cannot order parallel costs {self} and {other}"
        )

    def evaluate(self, values: Mapping[str, int]) -> int:
        return self.constant + sum(c * values[s] for s, c in self.terms)

    def to_json(self) -> dict:
        out: dict = {s: c for s, c in self.terms}
        if self.constant:
            out["const"] = self.constant
        return out

    def __str__(self) -> str:
        parts = [(PRETTY[s] if c == 1 else f"{c} {PRETTY[s]}") for s, c in self.terms]
        if self.constant or not parts:
            parts.append(str(self.constant))
        return " + ".join(parts)


ZERO = DepthExpr()
STD = DepthExpr.symbol(D_STD)
OPLUS = DepthExpr.symbol(D_OPLUS)
OTIMES = DepthExpr.symbol(D_OTIMES)
EXP = DepthExpr.symbol(D_EXP)
SQRT = DepthExpr.symbol(D_SQRT)
G = DepthExpr.symbol(D_G)
# depth of the sin/cos circuit: floor+div for k, four std ops for r,
# the series step, and a final comparison
TRIG = 8 * STD + OPLUS + OTIMES

_PRIMITIVE = {
    "add": STD,
    "mul": STD,
    "div": STD,
    "cmp": STD,
    "floor": STD,
    "iter_add": OPLUS,
    "iter_mul": OTIMES,
    "exp": EXP,
    "sqrt": SQRT,
    "sin": TRIG,
    "cos": TRIG,
    "g": G,
}

PRIMITIVE_KINDS = tuple(_PRIMITIVE)


def primitive_cost(kind: str) -> DepthExpr:
    try:
        return _PRIMITIVE[kind]
    except KeyError:
        raise UnknownKind(f"unknown primitive kind {kind!r}") from None


# -- closed forms -----------------------------------------------------------

FORMULA_TEXT = {
    "matmul": "d_std + d_⊕",
    "attention_scores": "4(d_std + d_⊕) + d_△ + d_exp",
    "attention": "7(d_std + d_⊕) + d_△ + d_exp",
    "mlp": "2d_std + d_⊕",
    "layernorm": "5d_std + 2d_⊕ + d_sqrt",
    "identity": "0",
    "transformer": "(m+1)d_g + 7m(d_std + d_⊕) + m(d_△ + d_exp)",
}


def layer_formula(kind: str, m: int = 1) -> DepthExpr:
    if kind == "matmul":
        return STD + OPLUS
    if kind == "attention_scores":
        return 4 * (STD + OPLUS) + TRIG + EXP
    if kind == "attention":
        return 7 * (STD + OPLUS) + TRIG + EXP
    if kind == "mlp":
        return 2 * STD + OPLUS
    if kind == "layernorm":
        return 5 * STD + 2 * OPLUS + SQRT
    if kind == "identity":
        return ZERO
    if kind == "transformer":
        if m < 0:
            raise ValueError("layer count must be non-negative")
        return (m + 1) * G + 7 * m * (STD + OPLUS) + m * (TRIG + EXP)
    raise UnknownKind(f"no closed form for {kind!r}")


# Largest per-layer coefficient in any closed form above is 15 (d_std of
# an attention layer); anything beyond this per layer is not a constant.
PER_LAYER_BOUND = 32


def assert_constant_depth(expr: DepthExpr, m: int, per_layer_bound: int = PER_LAYER_BOUND) -> bool:
    """True iff every coefficient is within ``per_layer_bound * (m + 1)``.

    The bound depends on the layer count only, never on sequence length,
    width or precision.
    """
    limit = per_layer_bound * (m + 1)
    return expr.constant <= limit and all(c <= limit for _, c in expr.terms)


# -- traces -----------------------------------------------------------------


class CostTrace:
    """Ordered record of primitive events grouped into sequential stages."""

    def __init__(self):
        self.stages: list[Counter] = []
        self._open = 0

    def record(self, kind: str, count: int = 1) -> None:
        if kind not in _PRIMITIVE:
            raise UnknownKind(f"unknown primitive kind {kind!r}")
        if self._open:
            self.stages[-1][kind] += count
        else:
            self.stages.append(Counter({kind: count}))

    @contextmanager
    def stage(self) -> Iterator[None]:
        if self._open == 0:
            self.stages.append(Counter())
        self._open += 1
        try:
            yield
        finally:
            self._open -= 1
            if self._open == 0 and not self.stages[-1]:
                self.stages.pop()

    @property
    def in_stage(self) -> bool:
        return self._open > 0

    def merge_parallel(self, branches: Iterable["CostTrace"]) -> None:
        """Fold independent branch traces in, aligned level by level."""
        branches = list(branches)
        for b in branches:
            if b._open:
                raise TraceError("cannot merge a branch with an open stage")
        if self._open:
            for b in branches:
                if len(b.stages) > 1:
                    raise TraceError("multi-stage branch inside an open stage")
                for st in b.stages:
                    self.stages[-1].update(st)
            return
        depth = max((len(b.stages) for b in branches), default=0)
        for level in range(depth):
            merged = Counter()
            for b in branches:
                if level < len(b.stages):
                    merged.update(b.stages[level])
            self.stages.append(merged)

    def extend(self, other: "CostTrace") -> None:
        """Append ``other``'s stages sequentially."""
        if self._open or other._open:
            raise TraceError("cannot concatenate traces with open stages")
        self.stages.extend(Counter(st) for st in other.stages)

    @property
    def size(self) -> int:
        return sum(sum(st.values()) for st in self.stages)

    def counts(self) -> Counter:
        total = Counter()
        for st in self.stages:
            total.update(st)
        return total

    def depth(self) -> DepthExpr:
        return trace_depth(self)


def stage_cost(kinds: Iterable[str]) -> DepthExpr:
    cost = None
    for kind in kinds:
        c = primitive_cost(kind)
        cost = c if cost is None else cost.join(c)
    return ZERO if cost is None else cost


def trace_depth(trace: CostTrace) -> DepthExpr:
    total = ZERO
    for st in trace.stages:
        total = total + stage_cost(k for k, v in st.items() if v)
    return total


_ACTIVE: contextvars.ContextVar[CostTrace | None] = contextvars.ContextVar(
    "ropetc_trace", default=None
)


def current_trace() -> CostTrace | None:
    return _ACTIVE.get()


def record(kind: str, count: int = 1) -> None:
    trace = _ACTIVE.get()
    if trace is not None:
        trace.record(kind, count)


@contextmanager
def tracing(trace: CostTrace | None = None) -> Iterator[CostTrace]:
    """Activate ``trace`` (a fresh one by default) for the enclosed block."""
    trace = CostTrace() if trace is None else trace
    token = _ACTIVE.set(trace)
    try:
        yield trace
    finally:
        _ACTIVE.reset(token)


@contextmanager
def untraced() -> Iterator[None]:
    token = _ACTIVE.set(None)
    try:
        yield
    finally:
        _ACTIVE.reset(token)


@contextmanager
def stage() -> Iterator[None]:
    trace = _ACTIVE.get()
    if trace is None:
        yield
    else:
        with trace.stage():
            yield
