"""Exact-step reference for the matrix and transformer code.

Every defined operation is replayed on Fractions with the scalar oracle;
exp, sqrt, sin and cos are computed by mpmath far beyond p bits and then
rounded once.  Weights are taken from the model objects as plain values.
"""

from __future__ import annotations

from fractions import Fraction

import mpmath

import oracles


def _fr(me) -> Fraction:
    m, e = me
    return Fraction(m) * Fraction(2) ** e


class Steps:
    def __init__(self, p: int):
        self.p = p

    def me(self, x: Fraction):
        return oracles.o_round(x, self.p)

    def R(self, x) -> Fraction:
        return _fr(oracles.o_round(Fraction(x), self.p))

    def add(self, a, b):
        return _fr(oracles.o_add(self.me(a), self.me(b), self.p))

    def mul(self, a, b):
        return _fr(oracles.o_mul(self.me(a), self.me(b), self.p))

    def div(self, a, b):
        return _fr(oracles.o_div(self.me(a), self.me(b), self.p))

    def iter_add(self, xs):
        return self.R(sum(xs, Fraction(0)))

    def _via_mp(self, fn, x) -> Fraction:
        with mpmath.workprec(4 * self.p + 200):
            v = fn(mpmath.mpf(x.numerator) / x.denominator)
        return self.R(oracles.mp_to_fraction(v))

    def exp(self, x):
        return self._via_mp(mpmath.exp, x)

    def sqrt(self, x):
        return self._via_mp(mpmath.sqrt, x)

    def sin(self, x):
        return self._via_mp(mpmath.sin, x) if x else Fraction(0)

    def cos(self, x):
        return self._via_mp(mpmath.cos, x)

    # -- matrices as lists of lists of Fractions --------------------------------

    def matmul(self, a, b):
        k = len(b)
        return [[self.iter_add([self.mul(row[t], b[t][j]) for t in range(k)]) for j in range(len(b[0]))] for row in a]

    def thetas(self, d: int, base) -> list:
        out = []
        with mpmath.workprec(4 * self.p + 200):
            for t in range(d // 2):
                v = mpmath.power(mpmath.mpf(Fraction(base).numerator) / Fraction(base).denominator,
                                 mpmath.mpf(-2 * t) / d)
                out.append(self.R(oracles.mp_to_fraction(v)))
        return out

    def rotation(self, offset: int, thetas, d: int):
        M = [[Fraction(0)] * d for _ in range(d)]
        off = self.R(offset)
        for t, th in enumerate(thetas):
            ang = self.mul(off, th)
            c, s = self.cos(ang), self.sin(ang)
            M[2 * t][2 * t], M[2 * t][2 * t + 1] = c, -s
            M[2 * t + 1][2 * t], M[2 * t + 1][2 * t + 1] = s, c
        return M

    def scores(self, X, WQ, WK, thetas):
        n, d = len(X), len(X[0])
        WKt = [list(r) for r in zip(*WK)]
        kernels = {o: self.matmul(self.matmul(WQ, self.rotation(o, thetas, d)), WKt) for o in range(-(n - 1), n)}
        return [[self.exp(self.matmul(self.matmul([X[i]], kernels[j - i]), [[v] for v in X[j]])[0][0])
                 for j in range(n)] for i in range(n)]

    def attention(self, X, WQ, WK, WV, thetas):
        A = self.scores(X, WQ, WK, thetas)
        Y = self.matmul(self.matmul(A, X), WV)
        sums = [self.iter_add(r) for r in A]
        return [[self.div(y, sums[i]) for y in row] for i, row in enumerate(Y)]

    def mlp(self, X, W, b):
        Y = self.matmul(W, [list(r) for r in zip(*X)])
        return [[self.add(Y[k][i], b[k][0]) for k in range(len(W))] for i in range(len(X))]

    def layer_norm(self, X):
        d = len(X[0])
        out = []
        for row in X:
            mean = self.div(self.iter_add(row), self.R(d))
            devs = [self.add(x, -mean) for x in row]
            var = self.div(self.iter_add([self.mul(v, v) for v in devs]), self.R(d))
            sd = self.sqrt(var)
            out.append([self.div(v, sd) for v in devs])
        return out

    def g(self, layer, X):
        if layer.kind == "identity":
            return X
        if layer.kind == "mlp":
            return self.mlp(X, layer.W.values(), layer.b.values())
        return self.layer_norm(X)

    def forward(self, X, model):
        cfg = model.config
        thetas = [t.value() for t in cfg.thetas]
        Y = self.g(model.g0, X)
        for lw in model.layers:
            Y = self.attention(Y, lw.W_Q.values(), lw.W_K.values(), lw.W_V.values(), thetas)
            Y = self.g(lw.g, Y)
        return Y
