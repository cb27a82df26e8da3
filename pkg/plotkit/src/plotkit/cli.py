"""``plot`` command line entry point."""

from __future__ import annotations

import argparse
import sys

from .csvio import MissingColumnError, SchemaError
from .figures import FIGURE_KINDS, PlotSpec, UsageError, plot


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="plot", description="Render figures from simulation CSV logs."
    )
    p.add_argument("--kind", required=True, help=f"one of {', '.join(FIGURE_KINDS)}")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--title", default="", help="optional figure title")
    p.add_argument("--xlim", nargs=2, type=float, default=None, metavar=("LO", "HI"))
    p.add_argument("--ylim", nargs=2, type=float, default=None, metavar=("LO", "HI"))
    p.add_argument("inputs", nargs="+", help="input CSV file(s)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = PlotSpec(
            kind=args.kind,
            inputs=args.inputs,
            output=args.out,
            title=args.title,
            xlim=tuple(args.xlim) if args.xlim else None,
            ylim=tuple(args.ylim) if args.ylim else None,
        )
        plot(spec)
    except (UsageError, SchemaError, MissingColumnError) as e:
        print(f"plot: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
