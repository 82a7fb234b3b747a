"""Command-line front end: render one figdata CSV to a PNG."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .render import KINDS, FigureError, render

PROG = "render"


class _Parser(argparse.ArgumentParser):
    """Usage problems exit 1 (argparse's default of 2 is our runtime code)."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG,
                     description="Render an exported figdata CSV to a PNG.")
    parser.add_argument("--in", dest="infile", required=True,
                        help="figdata_*.csv file to read")
    parser.add_argument("--kind", required=True, choices=KINDS,
                        help="figure kind the table was exported for")
    parser.add_argument("--out", required=True,
                        help="output image path (.png)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        written = render(args.infile, args.out, args.kind)
    except (FigureError, OSError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {written}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
