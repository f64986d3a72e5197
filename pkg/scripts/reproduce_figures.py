"""Write the data behind every figure into one directory.

    python scripts/reproduce_figures.py --out figures [--quick] [--threads 4]
"""
import argparse
import sys
from pathlib import Path

from rfsps import cli
from rfsps.cli import FIGURES


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="figures")
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--only", nargs="*", choices=FIGURES, default=list(FIGURES))
    args = ap.parse_args(argv)

    status = 0
    for fig in args.only:
        cmd = ["figure", fig, "--out", str(Path(args.out) / f"fig{fig}"),
               "--threads", str(args.threads)]
        if args.quick:
            cmd.append("--quick")
        print("rfsps", " ".join(cmd), flush=True)
        status = max(status, cli.main(cmd))
    return status


if __name__ == "__main__":
    sys.exit(main())
