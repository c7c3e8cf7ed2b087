#!/usr/bin/env python3
"""Run the hospital-style fixture sweep over noise multipliers and print the
loss and privacy-budget tables.

Usage: python scripts/run_tabular.py [OUT_DIR]
"""

import sys
from pathlib import Path

from metricfl.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "results"
    code = main(["run", "--config", str(ROOT / "configs" / "tabular.yaml"), "--out", out])
    if code == 0:
        exp_dir = Path(out) / "tabular"
        print((exp_dir / "summary.csv").read_text())
        print((exp_dir / "budget_summary.csv").read_text())
    sys.exit(code)
