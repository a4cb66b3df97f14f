"""driftlab-plot: render one figure from a JSON spec.

One figure per process; batch rendering is a shell loop over spec files.
"""

import argparse
import sys

from .render import render
from .spec import FigureSpec, SchemaError


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="driftlab-plot",
                                 description="render a figure from run output")
    ap.add_argument("--spec", required=True, help="JSON figure spec")
    ap.add_argument("--out", help="override the spec's output path")
    args = ap.parse_args(argv)
    try:
        spec = FigureSpec.from_json(args.spec)
        if args.out:
            spec = FigureSpec.from_dict(
                {"kind": spec.kind, "csv": spec.csv, "out": args.out,
                 "fit": spec.fit, "sidecar": spec.sidecar,
                 "group_by": spec.group_by, "metric": spec.metric,
                 "absolute": spec.absolute})
        path = render(spec)
    except (SchemaError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
