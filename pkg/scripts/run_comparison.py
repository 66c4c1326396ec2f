#!/usr/bin/env python3
"""Emit paired Student-t vs Gaussian posterior predictive bands as CSV."""

import sys

from bnnlimits.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:]
    if not any(a.startswith("--config") for a in argv):
        argv = ["--config", "configs/posterior_convergence.json"] + argv
    sys.exit(main(["compare"] + argv))
