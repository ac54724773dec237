"""Command line front end: one run CSV in, panel images out."""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from .figures import PANELS, FigureSpec, render
from .reading import SchemaError

_FLAGS = {panel: f"--{panel.replace('_', '-')}" for panel in PANELS}


def bundled_csv(name: str) -> Path:
    """Path of a packaged example run (``experiment1`` or ``experiment2``)."""
    root = resources.files("servo_plots") / "data" / f"{name}.csv"
    with resources.as_file(root) as p:
        return Path(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="servo-plots",
        description="Render the four-panel figure set from a run CSV.",
    )
    parser.add_argument("csv", help="run CSV, or a bundled name like experiment1")
    parser.add_argument("out_dir", help="directory for the images")
    for panel, flag in _FLAGS.items():
        parser.add_argument(flag, action="store_true",
                            help=f"render the {panel.replace('_', ' ')} panel")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    selected = tuple(p for p in PANELS if getattr(args, p))
    csv_path = Path(args.csv)
    if not csv_path.exists() and csv_path.name == csv_path.as_posix():
        candidate = resources.files("servo_plots") / "data" / f"{args.csv}.csv"
        if candidate.is_file():
            csv_path = bundled_csv(args.csv)
    spec = FigureSpec(
        csv_path=csv_path,
        out_base=Path(args.out_dir) / csv_path.stem,
        panels=selected or PANELS,
    )
    try:
        written = render(spec)
    except SchemaError as err:
        print(f"schema error: {err}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
