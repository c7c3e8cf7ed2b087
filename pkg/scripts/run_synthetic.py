#!/usr/bin/env python3
"""Run the two-group synthetic experiment sweep (personalization and
sanitization ablations included) and print the aggregate table.

Usage: python scripts/run_synthetic.py [OUT_DIR]
"""

import sys
from pathlib import Path

from metricfl.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "results"
    code = main(["run", "--config", str(ROOT / "configs" / "synthetic.yaml"), "--out", out])
    if code == 0:
        print((Path(out) / "synthetic" / "summary.csv").read_text())
    sys.exit(code)
