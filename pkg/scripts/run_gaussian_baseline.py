#!/usr/bin/env python3
"""Run the fixed-variance baseline experiment and write plot-ready CSV.

Same pipeline as the posterior convergence run, but with a fixed likelihood
variance and the posterior Gaussian process as the limit.
"""

import sys

from bnnlimits.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:]
    if not any(a.startswith("--config") for a in argv):
        argv = ["--config", "configs/gaussian_baseline.json"] + argv
    sys.exit(main(["gaussian-baseline"] + argv))
