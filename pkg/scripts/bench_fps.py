#!/usr/bin/env python3
"""Per-stage FPS table at the standard benchmark frame sizes.

Thin wrapper over `followpipe bench`; keeps the experiment invocation in one
place alongside the other scripts.

Usage: python scripts/bench_fps.py --out results/bench
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from followpipe.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="320x240,640x480")
    parser.add_argument("--frames", type=int, default=15)
    parser.add_argument("--out", default="results/bench")
    args = parser.parse_args()
    return cli_main([
        "bench", "--sizes", args.sizes, "--frames", str(args.frames),
        "--out", args.out,
    ])


if __name__ == "__main__":
    raise SystemExit(main())
