"""ism-fig <kind> <inputs...> -o <path>"""

from __future__ import annotations

import argparse
import sys

from .render import FIGURE_KINDS, FigureJob, MissingColumnError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ism-fig",
                                     description="figures from ism run outputs")
    parser.add_argument("kind", choices=FIGURE_KINDS)
    parser.add_argument("inputs", nargs="+",
                        help="input files (bifurcation: bifurcation.csv then "
                             "any number of summary.json overlays)")
    parser.add_argument("-o", "--output", required=True)
    args = parser.parse_args(argv)
    try:
        render(FigureJob(args.kind, tuple(args.inputs), args.output))
    except (MissingColumnError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
