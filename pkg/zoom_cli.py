# zoom_cli.py
"""
Entry point for the zoom command line.

Usage:
    python zoom_cli.py synth --dataset base.fvecs --queries query.fvecs
    python zoom_cli.py oracle --dataset base.fvecs --queries query.fvecs --k 100 --truth gt.bin
    python zoom_cli.py build --dataset base.fvecs --index desk.zoom --n-cluster 2000 --m 8
    python zoom_cli.py bench --index desk.zoom --queries query.fvecs --truth gt.bin --out bench.csv
"""

import sys

from bench.cli import main

if __name__ == "__main__":
    sys.exit(main())
