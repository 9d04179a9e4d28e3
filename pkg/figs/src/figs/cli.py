"""Batch figure CLI: figs <kind> --in ... --out ...

Exit codes: 0 success, 2 usage or schema error.
"""

from __future__ import annotations

import argparse
import sys

from .render import FigureSpec, SchemaError, render


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figs", description="Render dindip CSV/PGM outputs as figures."
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind, help_text in [
        ("heatmap", "grid CSV -> colored (alpha, beta) or (k, alpha) matrix"),
        ("curves", "trajectory CSV(s) -> loss / signal-error panels"),
        ("image-strip", "PGM snapshots -> side-by-side strip"),
    ]:
        p = sub.add_parser(kind, help=help_text)
        p.add_argument("--in", dest="inputs", nargs="+", required=True,
                       help="input CSV/PGM file(s)")
        p.add_argument("--out", required=True, help="output image path")
        p.add_argument("--label", dest="labels", action="append", default=[],
                       help="per-input label (repeatable)")
        p.add_argument("--linear-y", action="store_true",
                       help="linear instead of log loss axis")
        p.add_argument("--dpi", type=int, default=150)
    return parser


def cli_dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    spec = FigureSpec(
        kind=args.kind,
        inputs=list(args.inputs),
        output=args.out,
        labels=list(args.labels),
        logy=not args.linear_y,
        dpi=args.dpi,
    )
    try:
        out = render(spec)
    except (SchemaError, FileNotFoundError) as exc:
        print(f"figs error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
