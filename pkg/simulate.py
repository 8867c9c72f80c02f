#!/usr/bin/env python3
"""
moral-sim

Seed-reproducible hunter-gatherer moral evolution simulator.

Usage:
    python simulate.py run --config configs/baseline.json --backend scripted --seed 42
    python simulate.py analyze --run-dir runs/<run_id>

This is a convenience entry point for a source checkout. The actual CLI is in
moral_sim/cli.py and is installed as the `moral-sim` command.
"""

from moral_sim.cli import main

if __name__ == "__main__":
    main()
