"""Plain-text model files.

A model file is a whitespace-separated token stream; ``#`` starts a comment
that runs to the end of the line.  Layout::

    n 4
    d 4
    p 16
    m 2
    theta_base 10000          # or: thetas <fp> ... (d/2 encodings)
    g0 identity               # identity | layernorm | mlp W <matrix> b <matrix>
    layer 1
    W_Q <matrix>
    W_K <matrix>
    W_V <matrix>
    g mlp W <matrix> b <matrix>
    layer 2
    ...

A ``<matrix>`` block is the tensor text format: ``rows cols p`` followed by
the entries in ``m*2^e@p`` encoding.
"""

from __future__ import annotations

from fractions import Fraction

from .errors import FormatError, RopeTcError
from .fp_core import format_fp, parse_fp
from .rope_transformer import G_KINDS, GLayer, LayerWeights, RopeConfig, TransformerModel
from .tensor import FpMatrix, format_matrix, parse_matrix_tokens


def _tokens(text: str) -> list[str]:
    out = []
    for line in text.splitlines():
        out.extend(line.split("#", 1)[0].split())
    return out


class _Reader:
    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.pos = 0

    def next(self, what: str) -> str:
        if self.pos >= len(self.tokens):
            raise FormatError(f"model file ends early, expected {what}")
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def keyword(self, word: str) -> None:
        tok = self.next(repr(word))
        if tok != word:
            raise FormatError(f"expected {word!r} at token {self.pos}, found {tok!r}")

    def integer(self, what: str) -> int:
        tok = self.next(what)
        try:
            return int(tok)
        except ValueError:
            raise FormatError(f"{what} must be an integer, found {tok!r}") from None

    def matrix(self, what: str) -> FpMatrix:
        try:
            mat, self.pos = parse_matrix_tokens(self.tokens, self.pos)
        except FormatError as exc:
            raise FormatError(f"{what}: {exc}") from None
        return mat

    def g_layer(self) -> GLayer:
        kind = self.next("component kind")
        if kind not in G_KINDS:
            raise FormatError(f"unknown component kind {kind!r}; choose from {', '.join(G_KINDS)}")
        if kind != "mlp":
            return GLayer(kind)
        self.keyword("W")
        W = self.matrix("mlp W")
        self.keyword("b")
        b = self.matrix("mlp b")
        return GLayer("mlp", W, b)


def parse_model(text: str) -> TransformerModel:
    r = _Reader(_tokens(text))
    r.keyword("n")
    n = r.integer("n")
    r.keyword("d")
    d = r.integer("d")
    r.keyword("p")
    p = r.integer("p")
    r.keyword("m")
    m = r.integer("m")
    if n < 1 or d < 2 or p < 2 or m < 0:
        raise FormatError(f"need n >= 1, even d >= 2, p >= 2, m >= 0; got n={n} d={d} p={p} m={m}")
    head = r.next("theta_base or thetas")
    try:
        if head == "theta_base":
            tok = r.next("theta_base value")
            try:
                base = Fraction(tok)
            except ValueError:
                raise FormatError(f"bad theta_base {tok!r}") from None
            if base <= 0:
                raise FormatError("theta_base must be positive")
            cfg = RopeConfig.create(n, d, p, base)
        elif head == "thetas":
            thetas = [parse_fp(r.next("theta")) for _ in range(d // 2)]
            cfg = RopeConfig.create(n, d, p, thetas=thetas)
        else:
            raise FormatError(f"expected theta_base or thetas, found {head!r}")
        r.keyword("g0")
        g0 = r.g_layer()
        layers = []
        for i in range(1, m + 1):
            r.keyword("layer")
            if r.integer("layer index") != i:
                raise FormatError(f"layers must be numbered 1..{m} in order")
            w = {}
            for name in ("W_Q", "W_K", "W_V"):
                r.keyword(name)
                w[name] = r.matrix(f"layer {i} {name}")
            r.keyword("g")
            layers.append(LayerWeights(w["W_Q"], w["W_K"], w["W_V"], r.g_layer()))
        if r.pos != len(r.tokens):
            raise FormatError(f"unexpected trailing token {r.tokens[r.pos]!r}")
        model = TransformerModel(cfg, tuple(layers), g0)
    except FormatError:
        raise
    except RopeTcError as exc:
        raise FormatError(f"invalid model: {exc}") from None
    for mat in _matrices(model):
        if mat.precision != p:
            raise FormatError(f"matrix precision {mat.precision} differs from model p={p}")
    return model


def _matrices(model: TransformerModel):
    for g in [model.g0] + [lw.g for lw in model.layers]:
        if g.kind == "mlp":
            yield g.W
            yield g.b
    for lw in model.layers:
        yield from (lw.W_Q, lw.W_K, lw.W_V)


def _format_g(g: GLayer) -> str:
    if g.kind != "mlp":
        return g.kind + "\n"
    return "mlp\nW\n" + format_matrix(g.W) + "b\n" + format_matrix(g.b)


def format_model(model: TransformerModel, explicit_thetas: bool = False) -> str:
    cfg = model.config
    out = [f"n {cfg.n}\nd {cfg.d}\np {cfg.p}\nm {model.m}\n"]
    if explicit_thetas:
        out.append("thetas " + " ".join(format_fp(t) for t in cfg.thetas) + "\n")
    else:
        base = cfg.theta_base
        out.append(f"theta_base {base.numerator if base.denominator == 1 else base}\n")
    out.append("g0 " + _format_g(model.g0))
    for i, lw in enumerate(model.layers, 1):
        out.append(f"layer {i}\n")
        for name in ("W_Q", "W_K", "W_V"):
            out.append(f"{name}\n" + format_matrix(getattr(lw, name)))
        out.append("g " + _format_g(lw.g))
    return "".join(out)
