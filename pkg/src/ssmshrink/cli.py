"""Command-line front end.

Exit codes: 0 success, 1 gradient check failed, 2 usage or validation
error, 3 numerical failure (instability, near-singular equations or a
stalled line search).
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import math
import os
import sys
import warnings

from .bound import bound_report, default_omega, l2_norm, layer_input_norms, linf_norm
from .dssm import build_reduced_dssm, synth_random_dssm
from .gradients import BLOCKS, finite_difference_check
from .lqo import StabilityError
from .modelio import load_model, load_signal, save_model, save_report
from .reduce import (ReductionConfig, init_mode_dominance, init_random_stable,
                     reduce_gradient_descent)
from .stein import NearSingularError

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("ssmshrink")

BLOCK_LABELS = {"lam": "Lambda", "B": "B", "C": "C", "U": "U"}


class UsageError(ValueError):
    pass


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"ranks must be positive, got {text}")
    return vals


def _eta(text):
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"--eta needs four values a,b,c,d, got {text!r}")
    return tuple(_positive_float(p) for p in parts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssmshrink",
        description="Time-limited h2 model-order reduction for Deep SSMs with LQO layers.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a random stable Deep SSM")
    p.add_argument("--layers", type=_positive_int, required=True)
    p.add_argument("--state-dim", type=_positive_int, required=True)
    p.add_argument("--width", type=_positive_int, required=True)
    p.add_argument("--quad-rank", type=_positive_int, default=1)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--ln-eps", type=_positive_float, default=1e-5)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("reduce", help="reduce every layer by gradient descent")
    p.add_argument("--model", required=True)
    p.add_argument("--ranks", type=_int_list, required=True)
    p.add_argument("--horizon", type=_positive_int, required=True)
    p.add_argument("--init", choices=("mode-dominance", "random"), default="mode-dominance")
    p.add_argument("--max-iters", type=_nonneg_int, default=20)
    p.add_argument("--c1", type=_positive_float, default=1e-4)
    p.add_argument("--rho", type=_positive_float, default=0.5)
    p.add_argument("--eta", type=_eta, default=(1.0, 1.0, 1.0, 1.0))
    p.add_argument("--grad-tol", type=_positive_float, default=1e-8)
    p.add_argument("--b", type=float, default=1.0,
                   help="input-norm constant used in the layer weights (default 1)")
    p.add_argument("--omega", type=_positive_float, default=None,
                   help="LayerNorm Lipschitz constant (default: largest upper bound)")
    p.add_argument("--seed", type=_nonneg_int, default=0, help="seed for --init random")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_reduce)

    for name, func, helptext in (("bound", cmd_bound, "output-error bound as JSON"),
                                 ("eval", cmd_eval, "measured output error and signal norms")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--full", required=True)
        p.add_argument("--reduced", required=True)
        p.add_argument("--input", required=True)
        p.add_argument("--horizon", type=_positive_int, required=True)
        p.add_argument("--header", action="store_true", help="skip one header line of the input CSV")
        if name == "bound":
            p.add_argument("--b", type=float, default=None,
                           help="input-norm constant (default: measured maximum)")
            p.add_argument("--omega", type=_positive_float, default=None,
                           help="LayerNorm Lipschitz constant (default: largest upper bound)")
        p.set_defaults(func=func)

    p = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    p.add_argument("--model", required=True)
    p.add_argument("--ranks", type=_int_list, required=True)
    p.add_argument("--horizon", type=_positive_int, required=True)
    p.add_argument("--fd-step", type=_positive_float, default=1e-6)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--threshold", type=_positive_float, default=1e-5)
    p.add_argument("--inject-sign-flip", action="store_true",
                   help="debug: negate the cross term of the C gradient")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def _check_ranks(model, ranks):
    if len(ranks) != model.depth:
        raise UsageError(f"{len(ranks)} ranks given for {model.depth} layers")
    for i, (r, system) in enumerate(zip(ranks, model.systems)):
        if r > system.n:
            raise UsageError(f"layer {i}: rank {r} exceeds state dimension {system.n}")


def cmd_synth(args):
    model = synth_random_dssm(args.layers, args.state_dim, args.width, args.quad_rank,
                              args.seed, ln_eps=args.ln_eps)
    save_model(model, args.output)
    return EXIT_OK


def cmd_reduce(args):
    if not args.rho < 1.0:
        raise UsageError(f"--rho must lie in (0, 1), got {args.rho}")
    if not args.c1 < 1.0:
        raise UsageError(f"--c1 must lie in (0, 1), got {args.c1}")
    if args.b < 0:
        raise UsageError(f"--b must be nonnegative, got {args.b}")
    full = load_model(args.model)
    _check_ranks(full, args.ranks)
    omega = default_omega(full) if args.omega is None else args.omega
    config = ReductionConfig(ranks=args.ranks, L=args.horizon, eta_init=args.eta,
                             c1=args.c1, rho=args.rho, K_max=args.max_iters,
                             grad_tol=args.grad_tol, b=args.b, omega=omega)
    fulls = full.systems
    if args.init == "mode-dominance":
        roms = [init_mode_dominance(s, r) for s, r in zip(fulls, args.ranks)]
    else:
        roms = [init_random_stable(r, s.m, s.p, s.c, args.seed + i)
                for i, (s, r) in enumerate(zip(fulls, args.ranks))]
    roms, report = reduce_gradient_descent(fulls, roms, config)
    save_model(build_reduced_dssm(full, roms), args.output)
    save_report(report, args.report)
    first = report.rows[0].objective if report.rows else float("nan")
    print(f"initial_objective={first!r} final_objective={report.final_objective!r} "
          f"iterations={len(report.rows) - 1} reason={report.reason}")
    if report.reason == "stalled":
        print("line search stalled; outputs hold the last accepted iterate", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _load_pair(args):
    full = load_model(args.full)
    reduced = load_model(args.reduced)
    signal = load_signal(args.input, header=args.header)
    return full, reduced, signal


def cmd_bound(args):
    full, reduced, signal = _load_pair(args)
    if args.b is not None and args.b < 0:
        raise UsageError(f"--b must be nonnegative, got {args.b}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = bound_report(full, reduced, signal, args.horizon, b=args.b, omega=args.omega)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    json.dump(rep.to_dict(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_eval(args):
    full, reduced, signal = _load_pair(args)
    u, uh, tf, tr = layer_input_norms(full, reduced, signal, args.horizon)
    e = linf_norm(tf.s_out - tr.s_out)
    lines = [f"e_xi,{e!r}", "layer,u_norm,uhat_norm"]
    lines += [f"{i + 1},{a!r},{b!r}" for i, (a, b) in enumerate(zip(u, uh))]
    lines.append(f"out,{l2_norm(tf.s_out)!r},{l2_norm(tr.s_out)!r}")
    print("\n".join(lines))
    return EXIT_OK


def cmd_gradcheck(args):
    if not 1e-8 <= args.fd_step <= 1e-4:
        raise UsageError(f"--fd-step must lie in [1e-8, 1e-4], got {args.fd_step}")
    full = load_model(args.model)
    _check_ranks(full, args.ranks)
    fulls = full.systems
    roms = [init_random_stable(r, s.m, s.p, s.c, args.seed + i)
            for i, (s, r) in enumerate(zip(fulls, args.ranks))]
    errors = finite_difference_check(fulls, roms, args.horizon, step=args.fd_step,
                                     flip_c_cross=args.inject_sign_flip)
    print("layer,block,max_rel_error")
    worst = 0.0
    for i in range(len(fulls)):
        for name in BLOCKS:
            err = errors[name][i]
            worst = max(worst, err)
            print(f"{i + 1},{BLOCK_LABELS[name]},{err:.3e}")
    ok = worst <= args.threshold
    print(f"{'PASS' if ok else 'FAIL'}: worst {worst:.3e}, threshold {args.threshold:.3e}",
          file=sys.stderr)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _thread_limit():
    value = os.environ.get("SSMSHRINK_THREADS")
    if not value:
        return contextlib.nullcontext()
    try:
        n = int(value)
    except ValueError:
        raise UsageError(f"SSMSHRINK_THREADS must be an integer, got {value!r}") from None
    if n < 1:
        raise UsageError(f"SSMSHRINK_THREADS must be positive, got {n}")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except (StabilityError, NearSingularError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
