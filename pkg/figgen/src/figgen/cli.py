"""`figgen <spec.json>`: render one figure spec to PNG and SVG."""

from __future__ import annotations

import argparse
import json
import sys

from .io import FiggenError
from .render import FigureSpec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="figgen", description="Render thermalizer CSV outputs to figures")
    parser.add_argument("spec", help="figure spec JSON file")
    args = parser.parse_args(argv)
    with open(args.spec) as fh:
        spec = FigureSpec.from_dict(json.load(fh))
    try:
        result = render(spec)
    except FiggenError as exc:
        print(f"figgen: {exc}", file=sys.stderr)
        return 1
    for path in result.paths:
        print(path)
    for label, slope in result.slopes.items():
        print(f"slope[{label}] = {slope!r}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
