#!/usr/bin/env python3
"""Run the prior width-convergence experiment and write plot-ready CSV.

Compares finite-width prior network draws against the limiting Gaussian
process on a fixed test grid, one exact W1 estimate per width.
"""

import sys

from bnnlimits.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:]
    if not any(a.startswith("--config") for a in argv):
        argv = ["--config", "configs/prior_convergence.json"] + argv
    sys.exit(main(["prior-convergence"] + argv))
