"""Dense matrices of p-bit floats.

Inner products multiply entrywise with :func:`fp_mul` and then sum the
rounded products with one :func:`fp_iter_add`, so each entry is rounded
exactly twice no matter the inner dimension.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .depth_accountant import stage
from .errors import FormatError, PrecisionMismatch, ShapeMismatch, ZeroRowSum
from .fp_core import FpNum, fp_div, fp_iter_add, fp_mul, format_fp, one, parse_fp, round_p, zero
from .transcendental import fp_exp


@dataclass(frozen=True)
class FpMatrix:
    rows: int
    cols: int
    entries: tuple[FpNum, ...]

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ShapeMismatch(f"matrix shape must be positive, got {self.rows}x{self.cols}")
        if len(self.entries) != self.rows * self.cols:
            raise ShapeMismatch(
                f"{self.rows}x{self.cols} matrix needs {self.rows * self.cols} entries, "
                f"got {len(self.entries)}"
            )
        p = self.entries[0].precision
        if any(x.precision != p for x in self.entries):
            raise PrecisionMismatch("matrix entries must share one precision")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[FpNum]]) -> "FpMatrix":
        rows = [list(r) for r in rows]
        if not rows or any(len(r) != len(rows[0]) for r in rows):
            raise ShapeMismatch("ragged or empty row list")
        return cls(len(rows), len(rows[0]), tuple(x for r in rows for x in r))

    @classmethod
    def from_values(cls, rows: Sequence[Sequence], p: int) -> "FpMatrix":
        """Round every rational (or int, or decimal string) entry to p bits."""
        return cls.from_rows([[round_p(Fraction(v), p) for v in r] for r in rows])

    @classmethod
    def identity(cls, n: int, p: int) -> "FpMatrix":
        o, z = one(p), zero(p)
        return cls(n, n, tuple(o if i == j else z for i in range(n) for j in range(n)))

    @classmethod
    def zeros(cls, rows: int, cols: int, p: int) -> "FpMatrix":
        return cls(rows, cols, (zero(p),) * (rows * cols))

    @property
    def precision(self) -> int:
        return self.entries[0].precision

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    def __getitem__(self, ij: tuple[int, int]) -> FpNum:
        i, j = ij
        if not (0 <= i < self.rows and 0 <= j < self.cols):
            raise IndexError(ij)
        return self.entries[i * self.cols + j]

    def row(self, i: int) -> "FpMatrix":
        return FpMatrix(1, self.cols, self.entries[i * self.cols:(i + 1) * self.cols])

    def row_list(self, i: int) -> list[FpNum]:
        return list(self.entries[i * self.cols:(i + 1) * self.cols])

    def to_rows(self) -> list[list[FpNum]]:
        return [self.row_list(i) for i in range(self.rows)]

    def transpose(self) -> "FpMatrix":
        return FpMatrix(
            self.cols,
            self.rows,
            tuple(self.entries[i * self.cols + j] for j in range(self.cols) for i in range(self.rows)),
        )

    def values(self) -> list[list[Fraction]]:
        return [[x.value() for x in r] for r in self.to_rows()]

    def floats(self) -> list[list[float]]:
        return [[float(x) for x in r] for r in self.to_rows()]


def vstack(parts: Iterable[FpMatrix]) -> FpMatrix:
    parts = list(parts)
    cols = parts[0].cols
    if any(m.cols != cols for m in parts):
        raise ShapeMismatch("vstack needs equal column counts")
    return FpMatrix(sum(m.rows for m in parts), cols, tuple(x for m in parts for x in m.entries))


def matmul(a: FpMatrix, b: FpMatrix) -> FpMatrix:
    if a.cols != b.rows:
        raise ShapeMismatch(f"cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")
    if a.precision != b.precision:
        raise PrecisionMismatch("matmul operands differ in precision")
    n, k, m = a.rows, a.cols, b.cols
    ae, be = a.entries, b.entries
    with stage():
        products = [
            [fp_mul(ae[i * k + t], be[t * m + j]) for t in range(k)]
            for i in range(n)
            for j in range(m)
        ]
    with stage():
        sums = tuple(fp_iter_add(ps) for ps in products)
    return FpMatrix(n, m, sums)


def softmax_row(z: FpMatrix) -> FpMatrix:
    if z.rows != 1:
        raise ShapeMismatch("softmax_row expects a 1 x n matrix")
    with stage():
        exps = [fp_exp(x) for x in z.entries]
    with stage():
        total = fp_iter_add(exps)
    with stage():
        out = tuple(fp_div(x, total) for x in exps)
    return FpMatrix(1, z.cols, out)


def row_sums_diag_inverse_apply(a: FpMatrix, m: FpMatrix) -> FpMatrix:
    """Divide row i of ``m`` by the (single-rounding) sum of row i of ``a``."""
    if a.rows != a.cols or a.rows != m.rows:
        raise ShapeMismatch(f"need square A matching M rows, got {a.shape} and {m.shape}")
    with stage():
        sums = [fp_iter_add(a.row_list(i)) for i in range(a.rows)]
    for i, s in enumerate(sums):
        if s.is_zero:
            raise ZeroRowSum(f"row {i} of the attention matrix sums to zero")
    with stage():
        out = tuple(fp_div(x, sums[i]) for i in range(m.rows) for x in m.row_list(i))
    return FpMatrix(m.rows, m.cols, out)


# -- text format -------------------------------------------------------------


def format_matrix(a: FpMatrix) -> str:
    lines = [f"{a.rows} {a.cols} {a.precision}"]
    for r in a.to_rows():
        lines.append(" ".join(format_fp(x) for x in r))
    return "\n".join(lines) + "\n"


def parse_matrix_tokens(tokens: list[str], pos: int = 0) -> tuple[FpMatrix, int]:
    """Read one matrix block from a token list; returns it and the next index."""
    try:
        rows, cols, p = (int(t) for t in tokens[pos:pos + 3])
    except ValueError:
        raise FormatError(f"bad matrix header {tokens[pos:pos + 3]!r}") from None
    if len(tokens[pos:pos + 3]) < 3:
        raise FormatError("truncated matrix header")
    if rows < 1 or cols < 1 or p < 2:
        raise FormatError(f"bad matrix header {rows} {cols} {p}")
    start = pos + 3
    body = tokens[start:start + rows * cols]
    if len(body) != rows * cols:
        raise FormatError(f"matrix needs {rows * cols} entries, found {len(body)}")
    entries = tuple(parse_fp(t) for t in body)
    if any(x.precision != p for x in entries):
        raise FormatError(f"matrix entries must all have precision {p}")
    return FpMatrix(rows, cols, entries), start + rows * cols


def parse_matrix(text: str) -> FpMatrix:
    tokens = text.split()
    if not tokens:
        raise FormatError("empty matrix text")
    mat, end = parse_matrix_tokens(tokens)
    if end != len(tokens):
        raise FormatError("trailing tokens after matrix")
    return mat
