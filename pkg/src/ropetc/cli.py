"""Command-line entry point: ``ropetc <subcommand> ...``.

Exit status is 0 on success, 1 on a domain error (one line on stderr:
``error: <Code>: <message>``) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError, RopeTcError
from .fp_core import parse_fp, round_p
from .parallel import ENV_THREADS, threads

ENV_PRECISION = "ROPETC_PRECISION"
DEFAULT_PRECISION = 16
EXHAUSTIVE_LIMIT = 1 << 20


class VerificationFailed(RopeTcError):
    code = "VerificationFailed"


class SelftestFailed(RopeTcError):
    code = "SelftestFailed"


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _non_negative_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _precision(text: str) -> int:
    v = _positive_int(text)
    if v < 2:
        raise argparse.ArgumentTypeError("precision must be >= 2")
    return v


def _env_default(name: str, parse, fallback):
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return fallback
    try:
        return parse(raw)
    except argparse.ArgumentTypeError as exc:
        raise SystemExit(f"ropetc: error: bad {name}: {exc}")


# -- helpers -----------------------------------------------------------------


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise FormatError(f"{path} is not valid UTF-8") from None


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _epsilon(args, p: int):
    if args.ln_epsilon is None:
        return None
    text = args.ln_epsilon
    try:
        eps = parse_fp(text) if "@" in text else round_p(Fraction(text), p)
    except (ValueError, ZeroDivisionError):
        raise FormatError(f"bad --ln-epsilon {text!r}") from None
    if eps.precision != p:
        raise FormatError(f"--ln-epsilon precision {eps.precision} differs from model p={p}")
    if eps.significand <= 0:
        raise FormatError("--ln-epsilon must be positive")
    return eps


# -- subcommands ---------------------------------------------------------------


def cmd_eval_transformer(args) -> int:
    from .model_io import parse_model
    from .rope_transformer import transformer_forward
    from .tensor import format_matrix, parse_matrix

    model = parse_model(_read(args.model))
    X = parse_matrix(_read(args.input))
    if X.precision != model.config.p:
        raise FormatError(f"input precision {X.precision} differs from model p={model.config.p}")
    Y = transformer_forward(X, model, _epsilon(args, model.config.p))
    _write(args.out, format_matrix(Y))
    return 0


def cmd_depth_report(args) -> int:
    from .model_io import parse_model
    from .report import default_input, depth_report, report_json, report_text
    from .rope_transformer import random_model
    from .tensor import parse_matrix

    if args.model:
        model = parse_model(_read(args.model))
    else:
        kinds = args.g_kind * (args.m + 1) if len(args.g_kind) == 1 else args.g_kind
        model = random_model(args.n, args.d, args.m, args.precision, args.seed, kinds)
    X = parse_matrix(_read(args.input)) if args.input else default_input(model, args.seed)
    report = depth_report(model, X, _epsilon(args, model.config.p))
    _write(args.out, report_json(report) if args.json else report_text(report))
    return 0 if report["all_equal"] else 1


def cmd_circuit_verify(args) -> int:
    from .threshold_circuit import (
        BUILDERS,
        build_iterated_add,
        export_circuit,
        from_bits,
        iterated_add_width,
        measure,
        simulate_batch,
    )

    w = args.width
    if args.builder == "iterated_add":
        count = args.count
        circuit = build_iterated_add(count, w)
        n_in = count * w

        def expect(bits: np.ndarray) -> np.ndarray:
            nums = bits.reshape(len(bits), count, w) @ (1 << np.arange(w, dtype=np.int64))
            return nums.sum(axis=1)

        out_width = iterated_add_width(count, w)
    else:
        circuit = BUILDERS[args.builder](w)
        n_in = 2 * w
        weights = 1 << np.arange(w, dtype=np.int64)

        def expect(bits: np.ndarray) -> np.ndarray:
            a, b = bits[:, :w] @ weights, bits[:, w:] @ weights
            return a + b if args.builder == "adder" else (a <= b).astype(np.int64)

        out_width = w + 1 if args.builder == "adder" else 1
    if args.exhaustive:
        if (1 << n_in) > EXHAUSTIVE_LIMIT:
            raise VerificationFailed(f"2^{n_in} inputs is too many for --exhaustive; use --samples")
        bits = np.array(list(itertools.product((0, 1), repeat=n_in)), dtype=np.int64)[:, ::-1]
    else:
        rng = np.random.default_rng(args.seed)
        bits = rng.integers(0, 2, size=(args.samples, n_in), dtype=np.int64)
    got = simulate_batch(circuit, bits).astype(np.int64) @ (1 << np.arange(out_width, dtype=np.int64))
    mismatches = int(np.count_nonzero(got != expect(bits)))
    depth, size = measure(circuit)
    label = f"builder={args.builder} width={w}" + (f" count={args.count}" if args.builder == "iterated_add" else "")
    print(f"{label} depth={depth} size={size} checked={len(bits)} mismatches={mismatches}")
    if args.export:
        _write(args.export, export_circuit(circuit))
    if mismatches:
        raise VerificationFailed(f"{mismatches} of {len(bits)} inputs disagree with integer arithmetic")
    return 0


def cmd_gen_formulas(args) -> int:
    from .formula_bench import generate_corpus

    corpus = generate_corpus(args.kind, args.count, args.depth, args.seed, args.vars)
    _write(args.out, "".join(line + "\n" for line in corpus))
    return 0


def cmd_eval_formula(args) -> int:
    from .formula_bench import evaluate_text, parse_assignment, parse_bool_infix, eval_bool

    carrier = args.kind[len("arith-"):] if args.kind.startswith("arith-") else None
    assignment = parse_assignment(args.assign, carrier) if carrier and args.assign else []
    out = []
    for lineno, line in enumerate(_read(args.input).splitlines(), 1):
        if not line.strip():
            continue
        try:
            if args.precedence and args.kind == "bool-infix":
                out.append(str(eval_bool(parse_bool_infix(line, precedence=True))))
            else:
                out.append(evaluate_text(args.kind, line, assignment))
        except RopeTcError as exc:
            exc.args = (f"line {lineno}: {exc}",)
            raise
    _write(args.out, "".join(v + "\n" for v in out))
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    if not run_selftest():
        raise SelftestFailed("one or more invariant checks failed")
    return 0


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    from .formula_bench import FORMULA_KINDS
    from .rope_transformer import G_KINDS
    from .threshold_circuit import BUILDERS

    default_p = _env_default(ENV_PRECISION, _precision, DEFAULT_PRECISION)
    default_threads = _env_default(ENV_THREADS, _positive_int, 1)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-p", "--precision", type=_precision, default=default_p,
                        help=f"float precision for generated data (default {default_p}; env {ENV_PRECISION})")
    common.add_argument("--threads", type=_positive_int, default=default_threads,
                        help=f"worker threads; results do not depend on it (env {ENV_THREADS})")

    parser = argparse.ArgumentParser(prog="ropetc", description="Exact-arithmetic RoPE transformer toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    ev = sub.add_parser("eval-transformer", parents=[common], help="run a model file on an input matrix")
    ev.add_argument("--model", required=True)
    ev.add_argument("--input", required=True)
    ev.add_argument("--out")
    ev.add_argument("--ln-epsilon", help="opt-in layer-norm epsilon (rational or m*2^e@p)")
    ev.set_defaults(func=cmd_eval_transformer)

    dr = sub.add_parser("depth-report", parents=[common], help="trace a forward pass and compare depths")
    src = dr.add_mutually_exclusive_group()
    src.add_argument("--model")
    src.add_argument("--random", action="store_true", help="use a seeded random model (default without --model)")
    dr.add_argument("--input")
    dr.add_argument("--n", type=_positive_int, default=4)
    dr.add_argument("--d", type=_positive_int, default=4)
    dr.add_argument("--m", type=_non_negative_int, default=2)
    dr.add_argument("--g-kind", nargs="+", choices=G_KINDS, default=["identity"],
                    help="one kind for every g, or m + 1 kinds")
    dr.add_argument("--seed", type=int, default=0)
    dr.add_argument("--json", action="store_true")
    dr.add_argument("--out")
    dr.add_argument("--ln-epsilon")
    dr.set_defaults(func=cmd_depth_report)

    cv = sub.add_parser("circuit-verify", parents=[common], help="check a threshold-circuit builder")
    cv.add_argument("--builder", required=True, choices=sorted(BUILDERS))
    cv.add_argument("--width", type=_positive_int, required=True)
    cv.add_argument("--count", type=_positive_int, default=3, help="operand count for iterated_add")
    mode = cv.add_mutually_exclusive_group()
    mode.add_argument("--exhaustive", action="store_true")
    mode.add_argument("--samples", type=_positive_int, default=10000)
    cv.add_argument("--seed", type=int, default=0)
    cv.add_argument("--export", help="write the circuit in text form")
    cv.set_defaults(func=cmd_circuit_verify)

    gf = sub.add_parser("gen-formulas", parents=[common], help="write a random formula corpus")
    gf.add_argument("--kind", required=True, choices=FORMULA_KINDS)
    gf.add_argument("--count", type=_non_negative_int, required=True)
    gf.add_argument("--depth", type=_non_negative_int, required=True)
    gf.add_argument("--seed", type=int, required=True)
    gf.add_argument("--vars", type=_non_negative_int, default=4)
    gf.add_argument("--out")
    gf.set_defaults(func=cmd_gen_formulas)

    ef = sub.add_parser("eval-formula", parents=[common], help="evaluate one formula per line")
    ef.add_argument("--kind", required=True, choices=FORMULA_KINDS)
    ef.add_argument("--in", dest="input", required=True)
    ef.add_argument("--assign", help="comma-separated values for X1, X2, ...")
    ef.add_argument("--precedence", action="store_true", help="lenient infix grammar with precedence")
    ef.add_argument("--out")
    ef.set_defaults(func=cmd_eval_formula)

    st = sub.add_parser("selftest", parents=[common], help="run the bundled invariant checks")
    st.set_defaults(func=cmd_selftest)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "circuit-verify" and args.builder == "iterated_add" and args.count < 2:
        parser.error("--count must be >= 2 for iterated_add")
    try:
        with threads(args.threads):
            return args.func(args)
    except RopeTcError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: IOError: {exc.strerror or exc}: {exc.filename}", file=sys.stderr)
        return 1
    except RecursionError:
        print("error: FormatError: input nested too deeply", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
