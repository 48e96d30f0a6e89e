"""Gaussian-kernel comparisons on the quartic, double-bananas and anisotropic targets.

Each target gets its own directory under --out with per-sampler runs and a
kl_compare.csv table. Extra flags are forwarded to every preset.
"""

import argparse
import sys

from asvgd.harness import main

PRESETS = ("fig2-quartic", "fig2-bananas", "fig2-anisotropic", "fig2-anisotropic-ula")


def cli(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs")
    p.add_argument("--only", choices=PRESETS, action="append", help="run a subset, repeatable")
    ns, extra = p.parse_known_args(argv)
    status = 0
    for name in ns.only or PRESETS:
        status = max(status, main(["preset", name, "--out", f"{ns.out}/{name}"] + extra))
    return status


if __name__ == "__main__":
    sys.exit(cli())
