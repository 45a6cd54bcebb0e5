"""Command-line entry point: ``dmaps <command> [options]``."""

import argparse
import sys
import warnings

from . import __version__
from .config import load_config
from .errors import ConfigError, NumericalFailureError
from .experiments import cmd_assa_trace, cmd_bias_sweep, cmd_spectrum, cmd_variance_sweep

COMMANDS = {
    "bias-sweep": (cmd_bias_sweep, "eigenvalue bias of continuum operators against eps"),
    "variance-sweep": (cmd_variance_sweep, "eigenspace errors of sampled operators against M"),
    "assa-trace": (cmd_assa_trace, "residual traces of ASSA and plain Sinkhorn"),
    "spectrum": (cmd_spectrum, "diffusion-map eigendata of a point file"),
}


def _common(p):
    p.add_argument("--config", metavar="PATH", help="TOML configuration file")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--trials", type=int, metavar="N")
    p.add_argument("--threads", type=int, metavar="N")


def build_parser():
    parser = argparse.ArgumentParser(prog="dmaps", description=__doc__)
    parser.add_argument("--version", action="version", version=f"dmaps {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        _common(p)
        if name == "spectrum":
            p.add_argument("input", nargs="?", help="headerless CSV, one point per row")
            p.add_argument("--eps", type=float, help="kernel bandwidth")
            p.add_argument("--normalization", help='"sinkhorn" or "standard:<alpha>"')
            p.add_argument("-k", type=int, help="number of eigenpairs")
            p.add_argument("--domain", choices=["torus", "euclidean"], help="default torus")
            p.add_argument("--L", type=float, help="torus side length (default 1)")
    return parser


def _overrides(args):
    kw = dict(out=args.out, seed=args.seed, trials=args.trials, threads=args.threads)
    if args.command == "spectrum":
        kw["eps"] = [args.eps] if args.eps is not None else None
        kw["normalizations"] = [args.normalization] if args.normalization else None
        kw["k"] = args.k
        kw["input"] = args.input
        kw["domain"] = args.domain
        kw["L"] = args.L
    return kw


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    fn = COMMANDS[args.command][0]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            cfg = load_config(args.command, args.config, **_overrides(args))
        fn(cfg)
    except (ConfigError, ValueError, OSError) as exc:
        parser.exit(2, f"dmaps {args.command}: error: {exc}\n")
    except NumericalFailureError as exc:
        parser.exit(3, f"dmaps {args.command}: numerical failure: {exc}\n")
    print(f"wrote results to {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
