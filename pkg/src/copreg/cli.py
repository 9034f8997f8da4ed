"""Command line entry point: ``copreg rectprob|asymlimit|simstudy|fit``."""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, CopregError, NumericalError
from .harness.config import load_config
from .harness.experiments import cmd_asymlimit, cmd_fit, cmd_rectprob, cmd_simstudy

COMMANDS = {
    "rectprob": cmd_rectprob,
    "asymlimit": cmd_asymlimit,
    "simstudy": cmd_simstudy,
    "fit": cmd_fit,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="copreg", description="Gaussian copula regression for discrete data")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "rectprob": "rectangle probabilities by engine",
        "asymlimit": "limiting HR / ML / SL estimators and SEs",
        "simstudy": "simulation study (bias or jitter mode)",
        "fit": "fit a model to a long-format CSV",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="key = value configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="write the CSV table here and print an aligned text table instead")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.command)
        if args.seed is not None:
            cfg.set("seed", args.seed)
        with np.errstate(all="ignore"):
            table = COMMANDS[args.command](cfg)
        unused = cfg.unused_keys()
        if unused:
            logging.getLogger("copreg").warning("ignored config keys: %s", ", ".join(unused))
        if args.out:
            try:
                table.write_csv(args.out)
            except OSError as exc:
                raise ConfigError(f"cannot write {args.out}: {exc.strerror}") from None
            sys.stdout.write(table.to_text())
        else:
            sys.stdout.write(table.to_csv())
        return 0
    except CopregError as exc:
        print(f"copreg: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"copreg: numerical failure: {exc}", file=sys.stderr)
        return NumericalError.exit_code


if __name__ == "__main__":
    sys.exit(main())
