"""Render figure families from a study bundle directory.

    figtools --bundle report_out --family profiles --out figs/profiles.png
    figtools --bundle report_out --all --out-dir figs/
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import FIGURE_FAMILIES, FigureSpec, NoDataError, render
from .schema import BUNDLE_FILES, SchemaError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="figtools",
                                     description="figures from uqbench study bundles")
    parser.add_argument("--bundle", required=True, help="report bundle directory")
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--family", choices=FIGURE_FAMILIES)
    group.add_argument("--all", action="store_true", help="render every family present")
    parser.add_argument("--out", help="output image path (single family)")
    parser.add_argument("--out-dir", default="figures_out", help="output directory (--all)")
    parser.add_argument("--dataset", action="append", default=[])
    parser.add_argument("--algorithm", action="append", default=[])
    parser.add_argument("--n-train", action="append", type=int, default=[])
    return parser


def _spec(args, family: str, output: Path) -> FigureSpec:
    bundle = Path(args.bundle)
    return FigureSpec(
        family=family,
        input_csv=bundle / BUNDLE_FILES[family],
        manifest=bundle / "manifest.json",
        output=output,
        datasets=tuple(args.dataset),
        algorithms=tuple(args.algorithm),
        n_train=tuple(args.n_train),
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    bundle = Path(args.bundle)
    try:
        if args.all:
            out_dir = Path(args.out_dir)
            rendered = []
            for family in FIGURE_FAMILIES:
                if not (bundle / BUNDLE_FILES[family]).exists():
                    print(f"skipping {family}: {BUNDLE_FILES[family]} not in bundle")
                    continue
                path = render(_spec(args, family, out_dir / f"{family}.png"))
                rendered.append(path)
                print(f"rendered {path}")
            if not rendered:
                print("error: bundle contains no renderable family CSVs", file=sys.stderr)
                return 1
            return 0
        output = Path(args.out) if args.out else Path(f"{args.family}.png")
        path = render(_spec(args, args.family, output))
        print(f"rendered {path}")
        return 0
    except FileNotFoundError as err:
        print(f"error: missing file: {err}", file=sys.stderr)
        return 2
    except (SchemaError, NoDataError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
