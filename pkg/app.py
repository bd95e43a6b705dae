"""
Command-line entry point.

    python app.py run --config configs/rademacher_hoeffding.json --out out
    python app.py suite --quick
    python app.py eval --bound bernstein_tail --n 10 --x 3 --k 1
"""
import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
