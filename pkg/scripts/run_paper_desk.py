#!/usr/bin/env python3
"""Run the bundled desk-scale experiment end to end.

Trains the classifier on the synthetic corpus, runs the FGSM/PGD/CW
sweeps, trains the poisoned counterpart, and leaves all reports under
runs/paper_desk/. Equivalent to:

    melstorm run --config experiments/paper_desk.json
"""

import sys
import time
from pathlib import Path

from melstorm.cli import main

REPO = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    started = time.time()
    code = main(["run", "--config", str(REPO / "experiments" / "paper_desk.json"), *sys.argv[1:]])
    print(f"finished in {time.time() - started:.0f}s")
    sys.exit(code)
