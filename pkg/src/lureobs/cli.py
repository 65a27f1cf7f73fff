"""Command line: ``lureobs {example1,example2,check,reduced-demo}``.

Exit codes: 0 success/pass, 1 check failed, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError
from .experiments import (_plain, run_check, run_example1, run_example2,
                          run_reduced_demo)
from .simulate import PreconditionError, SignMode


def _box(text: str):
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}")
    if not lo < hi:
        raise argparse.ArgumentTypeError("box needs LO < HI")
    return (lo, hi)


def _sign_mode(text: str) -> str:
    try:
        SignMode.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))
    return text


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _floats(text: str):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lureobs",
        description="Sliding-mode observers for set-valued Lur'e systems.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def sim_flags(p, sign=True):
        p.add_argument("--step", type=_positive, help="fixed step size")
        p.add_argument("--horizon", type=_positive, help="final time")
        p.add_argument("--scheme", choices=["euler", "rk4"])
        p.add_argument("--out", default="out", help="output directory")
        if sign:
            p.add_argument(
                "--sign-mode", type=_sign_mode,
                help="exact | sigmoid:EPS:VARIANT | guided:K1:K2:M:N")

    p1 = sub.add_parser("example1", help="chattering comparison on x' in "
                        "3 sin x - 4 Sign(x)")
    sim_flags(p1, sign=False)
    p1.add_argument("--variants", nargs="+", type=_sign_mode,
                    help="sign modes to run (default: the four bundled ones)")
    p1.add_argument("--jobs", type=int, default=4,
                    help="parallel worker threads")

    p2 = sub.add_parser("example2", help="three-state relay plant: checks, "
                        "certificate, observer run")
    sim_flags(p2)
    p2.add_argument("--beta", type=_positive)
    p2.add_argument("--gamma", type=float,
                    help="gamma for the reduced (bounded-h) check")
    p2.add_argument("--seed", type=int, help="seed for the sample box")
    p2.add_argument("--coordinates", choices=["state", "error"])
    p2.add_argument("--system", help="system file (default: bundled)")
    p2.add_argument("--gains", help="gains file (default: bundled)")

    p3 = sub.add_parser("check", help="verify design conditions for "
                        "candidate gains")
    p3.add_argument("--system", required=True)
    p3.add_argument("--gains", required=True)
    p3.add_argument("--gamma", type=float)
    p3.add_argument("--box", type=_box, help="state sample box LO:HI")
    p3.add_argument("--input-box", type=_box, help="input sample box LO:HI")
    p3.add_argument("--seed", type=int)
    p3.add_argument("--out", help="also write check.json here")

    p4 = sub.add_parser("reduced-demo", help="reduced-order observer on a "
                        "two-state plant")
    sim_flags(p4, sign=False)
    p4.add_argument("--epsilon", type=_positive)
    p4.add_argument("--zhat0", type=_floats,
                    help="observer initial state, comma-separated")
    p4.add_argument("--system")
    p4.add_argument("--gains")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "example1":
            code, report = run_example1(args.out, args.step, args.horizon,
                                        args.scheme, args.variants, args.jobs)
        elif args.command == "example2":
            code, report = run_example2(
                args.out, args.step, args.horizon, args.sign_mode, args.beta,
                args.gamma, args.seed, args.scheme, args.coordinates,
                args.system, args.gains)
        elif args.command == "check":
            code, report = run_check(args.system, args.gains, args.gamma,
                                     args.box, args.input_box, args.seed,
                                     args.out)
        else:
            code, report = run_reduced_demo(
                args.out, args.step, args.horizon, args.epsilon, args.zhat0,
                args.scheme, args.system, args.gains)
    except (ConfigError, PreconditionError, KeyError) as exc:
        print(f"lureobs: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"lureobs: I/O error: {exc}", file=sys.stderr)
        return 2
    json.dump(_plain(report), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
