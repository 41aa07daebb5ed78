#!/usr/bin/env python3
"""End-to-end demo on the bundled fixture data.

Fits the frequency and severity models, prices the sub-portfolio, runs the
tail-risk simulation, and writes a descriptive summary, all into ./out.
"""

import sys
from pathlib import Path

from defirisk.cli import main

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "tests" / "data"
OUT = ROOT / "out"


def run(args) -> None:
    code = main([str(a) for a in args])
    if code != 0:
        sys.exit(code)


def main_demo() -> None:
    incidents = DATA / "incidents.csv"
    tvl = DATA / "tvl.csv"
    run(["fit-frequency", "--incidents", incidents, "--tvl", tvl,
         "--portfolio", DATA / "portfolio.json", "--output", OUT, "--seed", 42])
    run(["fit-severity", "--incidents", incidents, "--output", OUT, "--seed", 42])
    run(["price", "--tvl", tvl, "--portfolio", DATA / "portfolio_priced.json",
         "--models", OUT, "--output", OUT, "--seed", 42, "--samples", 100000])
    run(["simulate", "--tvl", tvl, "--portfolio", DATA / "portfolio_priced.json",
         "--models", OUT, "--output", OUT, "--seed", 42, "--samples", 200000,
         "--workers", 4])
    run(["summarize", "--incidents", incidents, "--output", OUT])
    run(["gof", "--model", OUT / "severity_model.json", "--incidents", incidents,
         "--output", OUT])
    print(f"\ndemo outputs in {OUT}")


if __name__ == "__main__":
    main_demo()
