"""Render figures from gradsamp run artifacts.

  plotkit overlay --hist <histogram.csv> --out fig.png [--mu M --var V]
  plotkit curves  --metrics a.csv [b.csv ...] --out fig.png
  plotkit fl-curves --rounds a.csv [b.csv ...] --out fig.png
"""

from __future__ import annotations

import argparse
import sys

from .csvio import SchemaError
from .curves import plot_fl_round_curves, plot_training_curves
from .overlay import plot_histogram_overlay


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plotkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_ov = sub.add_parser("overlay", help="histogram with fitted-Gaussian overlay")
    p_ov.add_argument("--hist", required=True)
    p_ov.add_argument("--out", required=True)
    p_ov.add_argument("--mu", type=float)
    p_ov.add_argument("--var", type=float)

    p_cv = sub.add_parser("curves", help="training accuracy/FLOPs curves")
    p_cv.add_argument("--metrics", nargs="+", required=True)
    p_cv.add_argument("--out", required=True)

    p_fl = sub.add_parser("fl-curves", help="federated round curves")
    p_fl.add_argument("--rounds", nargs="+", required=True)
    p_fl.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "overlay":
            result = plot_histogram_overlay(args.hist, args.out, mu=args.mu, var=args.var)
            print(
                f"wrote {result.out_path} (mu={result.mu:.3e}, var={result.var:.3e}, "
                f"overlay mass {result.effective_count:.1f} of n={result.total})"
            )
        elif args.command == "curves":
            out = plot_training_curves(args.metrics, args.out)
            print(f"wrote {out}")
        else:
            out = plot_fl_round_curves(args.rounds, args.out)
            print(f"wrote {out}")
    except (SchemaError, OSError, ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
