"""RoPE attention and the multi-layer transformer in p-bit arithmetic.

Each function stages its work the way the circuit construction does:
everything inside one ``stage()`` is independent, and consecutive stages
are sequential.  The per-offset products ``W_Q R_{j-i} W_K^T`` are computed
once for each of the ``2n - 1`` offsets.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .depth_accountant import CostTrace, record, stage, tracing, untraced
from .errors import ShapeMismatch, UnknownKind, ZeroVariance
from .fp_core import (
    FpNum,
    _round,
    fp_add,
    fp_div,
    fp_iter_add,
    fp_mul,
    from_int,
    round_p,
    zero,
)
from .parallel import parallel_map
from .tensor import FpMatrix, matmul, row_sums_diag_inverse_apply
from .transcendental import fp_cos, fp_exp, fp_sin, fp_sqrt, iroot

G_KINDS = ("identity", "mlp", "layernorm")


def default_thetas(d: int, base=10000, p: int = 16) -> tuple[FpNum, ...]:
    """Frequencies ``base ** (-2(t-1)/d)`` for ``t = 1..d/2``, correctly rounded."""
    if d < 2 or d % 2:
        raise ShapeMismatch(f"embedding dimension must be even, got {d}")
    base = Fraction(base)
    if base <= 0:
        raise ValueError("theta base must be positive")
    a, b = base.numerator, base.denominator
    out = []
    for t in range(d // 2):
        k = 2 * t
        num, den = b ** k, a ** k  # value = (num/den) ** (1/d)
        w = 2 * p + 32 + max(0, (den.bit_length() - num.bit_length()) // d + 2)
        scaled = (num << (d * w)) // den
        r = iroot(scaled, d)
        if r ** d * den == num << (d * w):
            out.append(_round(r, 1, -w, p))
        else:
            out.append(_round(2 * r + 1, 2, -w, p))
    return tuple(out)


@dataclass(frozen=True)
class RopeConfig:
    n: int
    d: int
    p: int
    thetas: tuple[FpNum, ...]
    theta_base: Fraction = Fraction(10000)

    def __post_init__(self):
        if self.d < 2 or self.d % 2:
            raise ShapeMismatch(f"embedding dimension must be even, got {self.d}")
        if len(self.thetas) != self.d // 2:
            raise ShapeMismatch(f"need {self.d // 2} angle frequencies, got {len(self.thetas)}")
        if any(t.precision != self.p for t in self.thetas):
            raise ShapeMismatch("angle frequencies must use the model precision")

    @classmethod
    def create(cls, n: int, d: int, p: int, theta_base=10000, thetas=None) -> "RopeConfig":
        base = Fraction(theta_base)
        if thetas is None:
            thetas = default_thetas(d, base, p)
        return cls(n, d, p, tuple(thetas), base)


@dataclass(frozen=True)
class GLayer:
    """A non-attention component: identity, an affine MLP, or layer norm."""

    kind: str = "identity"
    W: Optional[FpMatrix] = None
    b: Optional[FpMatrix] = None

    def __post_init__(self):
        if self.kind not in G_KINDS:
            raise UnknownKind(f"unknown component kind {self.kind!r}; choose from {', '.join(G_KINDS)}")
        if self.kind == "mlp" and (self.W is None or self.b is None):
            raise ShapeMismatch("an mlp component needs W and b")


@dataclass(frozen=True)
class LayerWeights:
    W_Q: FpMatrix
    W_K: FpMatrix
    W_V: FpMatrix
    g: GLayer = field(default_factory=GLayer)


@dataclass(frozen=True)
class TransformerModel:
    config: RopeConfig
    layers: tuple[LayerWeights, ...]
    g0: GLayer = field(default_factory=GLayer)

    def __post_init__(self):
        d = self.config.d
        for i, lw in enumerate(self.layers, 1):
            for name in ("W_Q", "W_K", "W_V"):
                if getattr(lw, name).shape != (d, d):
                    raise ShapeMismatch(f"layer {i} {name} must be {d}x{d}")
        for g in [self.g0] + [lw.g for lw in self.layers]:
            if g.kind == "mlp" and (g.W.shape != (d, d) or g.b.shape != (d, 1)):
                raise ShapeMismatch(f"mlp weights must be {d}x{d} and {d}x1")

    @property
    def m(self) -> int:
        return len(self.layers)


# -- rotations ---------------------------------------------------------------


def rotation_block(theta: FpNum) -> FpMatrix:
    with stage():
        c = fp_cos(theta)
        s = fp_sin(theta)
    return FpMatrix(2, 2, (c, -s, s, c))


def relative_rotation(offset: int, cfg: RopeConfig) -> FpMatrix:
    p, d = cfg.p, cfg.d
    # the angle products are folded into the sin/cos stage (see d_△)
    with untraced():
        off = from_int(offset, p)
        angles = [fp_mul(off, th) for th in cfg.thetas]
    z = zero(p)
    entries = [z] * (d * d)
    with stage():
        for t, ang in enumerate(angles):
            blk = rotation_block(ang).entries
            r0 = 2 * t
            entries[r0 * d + r0] = blk[0]
            entries[r0 * d + r0 + 1] = blk[1]
            entries[(r0 + 1) * d + r0] = blk[2]
            entries[(r0 + 1) * d + r0 + 1] = blk[3]
    return FpMatrix(d, d, tuple(entries))


# -- attention ---------------------------------------------------------------


def _check_input(X: FpMatrix, cfg: RopeConfig) -> None:
    if X.cols != cfg.d:
        raise ShapeMismatch(f"input has {X.cols} columns, model dimension is {cfg.d}")
    if X.precision != cfg.p:
        raise ShapeMismatch(f"input precision {X.precision} differs from model p={cfg.p}")


def attention_scores(X: FpMatrix, W_Q: FpMatrix, W_K: FpMatrix, cfg: RopeConfig) -> FpMatrix:
    """``A[i, j] = exp(X_i W_Q R_{j-i} W_K^T X_j^T)``, no scaling, no mask."""
    _check_input(X, cfg)
    n = X.rows
    wk_t = W_K.transpose()
    offsets = list(range(-(n - 1), n))

    def per_offset(off: int) -> FpMatrix:
        return matmul(matmul(W_Q, relative_rotation(off, cfg)), wk_t)

    kernels = dict(zip(offsets, parallel_map(per_offset, offsets)))
    pairs = [(i, j) for i in range(n) for j in range(n)]

    def score(ij: tuple[int, int]) -> FpNum:
        i, j = ij
        left = matmul(X.row(i), kernels[j - i])
        return matmul(left, X.row(j).transpose()).entries[0]

    scores = parallel_map(score, pairs)
    with stage():
        entries = tuple(fp_exp(s) for s in scores)
    return FpMatrix(n, n, entries)


def attention_layer(X: FpMatrix, w: LayerWeights, cfg: RopeConfig) -> FpMatrix:
    """``D^-1 A X W_V`` with ``D = diag(A 1_n)``."""
    A = attention_scores(X, w.W_Q, w.W_K, cfg)
    Y = matmul(matmul(A, X), w.W_V)
    return row_sums_diag_inverse_apply(A, Y)


# -- other components ----------------------------------------------------------


def mlp_layer(X: FpMatrix, W: FpMatrix, b: FpMatrix) -> FpMatrix:
    """Row i becomes ``W X_i^T + b``."""
    d = X.cols
    if W.shape != (d, d) or b.shape != (d, 1):
        raise ShapeMismatch(f"mlp needs W {d}x{d} and b {d}x1, got {W.shape} and {b.shape}")
    Y = matmul(W, X.transpose())  # column i is W X_i^T
    with stage():
        out = [fp_add(Y[k, i], b[k, 0]) for i in range(X.rows) for k in range(d)]
    return FpMatrix(X.rows, d, tuple(out))


def layer_norm(X: FpMatrix, epsilon: Optional[FpNum] = None) -> FpMatrix:
    """Per-row ``(x - mean) / sqrt(variance)``.

    Zero variance raises :class:`ZeroVariance`.  Passing ``epsilon`` adds it
    to the variance before the square root; that mode is not part of the
    normalization being modelled and costs one extra addition stage.
    """
    n, d = X.shape
    p = X.precision
    dd = from_int(d, p)
    rows = X.to_rows()
    with stage():
        sums = [fp_iter_add(r) for r in rows]
    with stage():
        means = [fp_div(s, dd) for s in sums]
    with stage():
        devs = [[fp_add(x, -means[i]) for x in r] for i, r in enumerate(rows)]
    with stage():
        squares = [[fp_mul(v, v) for v in r] for r in devs]
    with stage():
        ssq = [fp_iter_add(r) for r in squares]
    with stage():
        var = [fp_div(s, dd) for s in ssq]
    if epsilon is None:
        for i, v in enumerate(var):
            # a constant row has exact variance 0 even if rounding left a residue
            if v.is_zero or all(x == rows[i][0] for x in rows[i]):
                raise ZeroVariance(f"row {i} has zero variance")
    else:
        with stage():
            var = [fp_add(v, epsilon) for v in var]
    with stage():
        sd = [fp_sqrt(v) for v in var]
    with stage():
        out = tuple(fp_div(x, sd[i]) for i, r in enumerate(devs) for x in r)
    return FpMatrix(n, d, out)


def apply_g(g: GLayer, X: FpMatrix, ln_epsilon: Optional[FpNum] = None) -> FpMatrix:
    if g.kind == "identity":
        return X
    if g.kind == "mlp":
        return mlp_layer(X, g.W, g.b)
    return layer_norm(X, ln_epsilon)


# -- composition ---------------------------------------------------------------


@dataclass
class ComponentTrace:
    name: str
    kind: str
    trace: CostTrace
    output: FpMatrix


@dataclass
class ForwardResult:
    output: FpMatrix
    trace: CostTrace
    components: list[ComponentTrace]


def forward_with_trace(
    X: FpMatrix, model: TransformerModel, ln_epsilon: Optional[FpNum] = None
) -> ForwardResult:
    """Evaluate ``g_m ∘ Attn_m ∘ ... ∘ g_1 ∘ Attn_1 ∘ g_0`` keeping every step.

    In the overall trace each g component counts as one opaque ``d_g``
    stage; its own detailed trace is kept alongside.
    """
    cfg = model.config
    _check_input(X, cfg)
    total = CostTrace()
    components: list[ComponentTrace] = []

    def run(name: str, kind: str, fn, as_g: bool) -> FpMatrix:
        sub = CostTrace()
        with tracing(sub):
            out = fn()
        if as_g:
            with tracing(total):
                record("g")
        else:
            total.extend(sub)
        components.append(ComponentTrace(name, kind, sub, out))
        return out

    Y = run("g0", model.g0.kind, lambda: apply_g(model.g0, X, ln_epsilon), True)
    for i, lw in enumerate(model.layers, 1):
        Y = run(f"attn{i}", "attention", lambda Y=Y, lw=lw: attention_layer(Y, lw, cfg), False)
        Y = run(f"g{i}", lw.g.kind, lambda Y=Y, lw=lw: apply_g(lw.g, Y, ln_epsilon), True)
    return ForwardResult(Y, total, components)


def transformer_forward(
    X: FpMatrix, model: TransformerModel, ln_epsilon: Optional[FpNum] = None
) -> FpMatrix:
    return forward_with_trace(X, model, ln_epsilon).output


# -- random instances ------------------------------------------------------------


def random_matrix(rows: int, cols: int, p: int, rng: random.Random, scale_bits: int = 1, frac_bits: int = 6) -> FpMatrix:
    """Entries uniform on a dyadic grid inside ``(-2**-scale_bits, 2**-scale_bits)``."""
    lim = 1 << frac_bits
    return FpMatrix(
        rows,
        cols,
        tuple(
            round_p(Fraction(rng.randint(-lim + 1, lim - 1), lim << scale_bits), p)
            for _ in range(rows * cols)
        ),
    )


def random_model(
    n: int,
    d: int,
    m: int,
    p: int,
    seed: int,
    g_kinds: Sequence[str] | None = None,
    theta_base=10000,
) -> TransformerModel:
    """Deterministic small-weight model; ``g_kinds`` lists g_0..g_m."""
    rng = random.Random(seed)
    kinds = list(g_kinds) if g_kinds is not None else ["identity"] * (m + 1)
    if len(kinds) != m + 1:
        raise ValueError("g_kinds must have m + 1 entries")

    def make_g(kind: str) -> GLayer:
        if kind == "mlp":
            return GLayer("mlp", random_matrix(d, d, p, rng), random_matrix(d, 1, p, rng))
        return GLayer(kind)

    cfg = RopeConfig.create(n, d, p, theta_base)
    g0 = make_g(kinds[0])
    layers = []
    for i in range(m):
        wq = random_matrix(d, d, p, rng)
        wk = random_matrix(d, d, p, rng)
        wv = random_matrix(d, d, p, rng)
        layers.append(LayerWeights(wq, wk, wv, make_g(kinds[i + 1])))
    return TransformerModel(cfg, tuple(layers), g0)
