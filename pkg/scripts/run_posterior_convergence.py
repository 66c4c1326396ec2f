#!/usr/bin/env python3
"""Run the posterior width-convergence experiment and write plot-ready CSV.

For each width, draws from the hierarchical-variance posterior via the
Gibbs sampler and compares against the limiting Student-t process.
"""

import sys

from bnnlimits.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:]
    if not any(a.startswith("--config") for a in argv):
        argv = ["--config", "configs/posterior_convergence.json"] + argv
    sys.exit(main(["posterior-convergence"] + argv))
