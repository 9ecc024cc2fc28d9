"""
Separating-hypersurface trajectory planner - entry point.

    python main.py run scenarios/passage_1.4.json
    python main.py bench "scenarios/passage_*.json" --runs 10
    python main.py separate a.csv b.csv --degree 2 --plot sep.svg
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from controller.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
