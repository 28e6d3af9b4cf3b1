from __future__ import annotations

import random
from fractions import Fraction

import pytest

from step_oracle import Steps
from ropetc.depth_accountant import tracing
from ropetc.errors import ShapeMismatch, UnknownKind, ZeroVariance
from ropetc.fp_core import FpNum, round_p
from ropetc.parallel import threads
from ropetc.rope_transformer import (
    GLayer,
    LayerWeights,
    RopeConfig,
    TransformerModel,
    attention_layer,
    default_thetas,
    forward_with_trace,
    layer_norm,
    mlp_layer,
    random_matrix,
    random_model,
    relative_rotation,
    rotation_block,
    transformer_forward,
)
from ropetc.tensor import FpMatrix, matmul


def test_default_thetas():
    th = default_thetas(4, 10000, 16)
    assert th[0].value() == 1
    assert th[1] == round_p(Fraction(1, 100), 16)
    assert Steps(12).thetas(8, 10000) == [t.value() for t in default_thetas(8, 10000, 12)]
    with pytest.raises(ShapeMismatch):
        default_thetas(3)


def test_rotation_block_examples():
    p = 16
    assert rotation_block(FpNum(0, 0, p)).values() == [[1, 0], [0, 1]]
    r = rotation_block(round_p(Fraction(1, 3), p)).values()
    assert r[0][1] == -r[1][0] and r[0][0] == r[1][1]
    det = r[0][0] * r[1][1] - r[0][1] * r[1][0]
    assert abs(det - 1) <= Fraction(1, 2 ** (p - 3))


def test_relative_rotation():
    cfg = RopeConfig.create(4, 6, 16)
    assert relative_rotation(0, cfg) == FpMatrix.identity(6, 16)
    s = Steps(16)
    thetas = [t.value() for t in cfg.thetas]
    for off in (-3, 1, 2):
        assert relative_rotation(off, cfg).values() == s.rotation(off, thetas, 6)


def test_attention_matches_step_oracle():
    p, n, d = 16, 3, 4
    rng = random.Random(8)
    cfg = RopeConfig.create(n, d, p)
    X = random_matrix(n, d, p, rng)
    w = LayerWeights(*(random_matrix(d, d, p, rng) for _ in range(3)))
    got = attention_layer(X, w, cfg).values()
    want = Steps(p).attention(X.values(), w.W_Q.values(), w.W_K.values(), w.W_V.values(),
                              [t.value() for t in cfg.thetas])
    assert got == want


def test_attention_shift_property():
    # scores depend on positions only through their difference
    p, d = 16, 4
    rng = random.Random(2)
    cfg = RopeConfig.create(3, d, p)
    row = random_matrix(1, d, p, rng)
    X = FpMatrix.from_rows([row.row_list(0)] * 3)
    w = LayerWeights(*(random_matrix(d, d, p, rng) for _ in range(3)))
    from ropetc.rope_transformer import attention_scores
    A = attention_scores(X, w.W_Q, w.W_K, cfg)
    assert A[0, 1] == A[1, 2] and A[1, 0] == A[2, 1]


def test_single_position():
    p, d = 12, 2
    rng = random.Random(5)
    cfg = RopeConfig.create(1, d, p)
    X = random_matrix(1, d, p, rng)
    eye = FpMatrix.identity(d, p)
    out = attention_layer(X, LayerWeights(eye, eye, eye), cfg)
    assert out == X


def test_mlp_layer():
    p = 12
    X = random_matrix(3, 4, p, random.Random(1))
    zero_b = FpMatrix.zeros(4, 1, p)
    assert mlp_layer(X, FpMatrix.identity(4, p), zero_b) == X
    b = random_matrix(4, 1, p, random.Random(2))
    out = mlp_layer(X, FpMatrix.zeros(4, 4, p), b)
    assert all(out[i, k] == b[k, 0] for i in range(3) for k in range(4))
    W = random_matrix(4, 4, p, random.Random(3))
    assert mlp_layer(X, W, b).values() == Steps(p).mlp(X.values(), W.values(), b.values())


def test_layer_norm():
    p = 16
    X = FpMatrix.from_values([[1, 3], [2, 6]], p)
    assert layer_norm(X).values() == [[-1, 1], [-1, 1]]
    Y = random_matrix(3, 4, p, random.Random(9))
    assert layer_norm(Y).values() == Steps(p).layer_norm(Y.values())
    with pytest.raises(ZeroVariance):
        layer_norm(FpMatrix.from_values([[5, 5, 5]], p))
    eps = round_p(Fraction(1, 1024), p)
    assert all(x.is_zero for x in layer_norm(FpMatrix.from_values([[5, 5]], p), eps).entries)


def test_unknown_g_kind():
    with pytest.raises(UnknownKind):
        GLayer("relu")


def test_forward_matches_step_oracle():
    model = random_model(3, 4, 2, 16, seed=13, g_kinds=["layernorm", "mlp", "identity"])
    X = random_matrix(3, 4, 16, random.Random(21))
    got = transformer_forward(X, model).values()
    assert got == Steps(16).forward(X.values(), model)


def test_forward_components():
    model = random_model(2, 2, 2, 12, seed=1)
    res = forward_with_trace(random_matrix(2, 2, 12, random.Random(0)), model)
    assert [c.name for c in res.components] == ["g0", "attn1", "g1", "attn2", "g2"]


def test_thread_count_does_not_change_results():
    model = random_model(4, 4, 1, 16, seed=3, g_kinds=["mlp", "layernorm"])
    X = random_matrix(4, 4, 16, random.Random(3))
    with threads(1):
        a = forward_with_trace(X, model)
    with threads(4):
        b = forward_with_trace(X, model)
    assert a.output == b.output
    assert a.trace.stages == b.trace.stages


@pytest.mark.parametrize("n,d", [(2, 2), (3, 4), (4, 4)])
def test_trace_size_polynomial(n, d):
    model = random_model(n, d, 1, 10, seed=n)
    res = forward_with_trace(random_matrix(n, d, 10, random.Random(n)), model)
    assert res.trace.size <= 8 * (n * d) ** 3


def test_model_shape_validation():
    cfg = RopeConfig.create(2, 2, 8)
    with pytest.raises(ShapeMismatch):
        TransformerModel(cfg, (LayerWeights(*(FpMatrix.zeros(3, 3, 8) for _ in range(3))),))
