"""CLI: urafig --input sweep.csv --kind mse-vs-pp --output fig.png"""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureSpec, RenderError, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="urafig", description=__doc__)
    parser.add_argument("--input", required=True, help="simulator CSV")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--output", required=True, help="image file to write")
    parser.add_argument("--sidecar", default=None,
                        help="sidecar table path (default: <output>.table.txt)")
    parser.add_argument("--modes", default=None, help="comma list, e.g. async,sync")
    parser.add_argument("--ka", default=None, help="comma list of Ka values to keep")
    args = parser.parse_args(argv)

    spec = FigureSpec(
        csv_path=args.input,
        kind=args.kind,
        output=args.output,
        sidecar=args.sidecar,
        modes=tuple(args.modes.split(",")) if args.modes else None,
        ka_values=tuple(float(x) for x in args.ka.split(",")) if args.ka else None,
    )
    try:
        image, sidecar = render(spec)
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {image} and {sidecar}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
