# scripts/estimate_memory_cost.py
"""
Estimate the preview-index memory for a configuration and compare it with a
memory budget. Defaults reproduce the 1M x 128 reference deployment.

Usage:
    python scripts/estimate_memory_cost.py
    python scripts/estimate_memory_cost.py --n 50000 --d 32 --n-cluster 2000 --m 8 --budget 4000000
"""

import os
import sys
import argparse

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.metrics import code_bits, memory_breakdown, memory_cost
from core.types import ZoomConfig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description='Preview-index memory estimate')
    parser.add_argument('--n', type=int, default=1_000_000, help='Vectors')
    parser.add_argument('--d', type=int, default=128, help='Dimension')
    parser.add_argument('--n-cluster', type=int, default=20000, help='First-level clusters')
    parser.add_argument('--m', type=int, default=32, help='PQ sub-dimensions')
    parser.add_argument('--l', type=int, default=256, help='Codewords per sub-codebook')
    parser.add_argument('--out-d', type=int, default=10, help='Routing out-degree')
    parser.add_argument('--budget', type=int, default=None, help='Memory budget in bytes')
    args = parser.parse_args(argv)

    config = ZoomConfig(n_cluster=args.n_cluster, m=args.m, l=args.l, out_d=args.out_d)
    parts = memory_breakdown(config, args.n, args.d)
    total = memory_cost(config, args.n, args.d)
    full_view = args.n * args.d * 4

    print("=" * 70)
    print("Preview Index Memory Estimate")
    print("=" * 70)
    print()
    print(f"Vectors: {args.n:,}  Dimension: {args.d}")
    print(f"Clusters: {args.n_cluster:,}  m={args.m}  l={args.l} ({code_bits(args.l)} bits/code)  OutD={args.out_d}")
    print()

    print("Breakdown:")
    print("-" * 70)
    print(f"  PQ codes + cached terms : {float(parts['codes']):>16,.0f} bytes")
    print(f"  Codebooks               : {float(parts['codebook']):>16,.0f} bytes")
    print(f"  Centroids + routing     : {float(parts['routing']):>16,.0f} bytes")
    print(f"  Total                   : {total:>16,} bytes ({total / 1024 ** 2:.1f} MiB)")
    print()
    print(f"Full-view vectors (on disk): {full_view:,} bytes")
    print(f"Memory reduction vs in-memory full view: {full_view / total:.1f}x")
    print()

    if args.budget is not None:
        if total <= args.budget:
            print(f" WITHIN BUDGET ({args.budget - total:,} bytes spare)")
        else:
            print(f"  EXCEEDS BUDGET by {total - args.budget:,} bytes")
        print()

    print("=" * 70)
    return 0 if args.budget is None or total <= args.budget else 1


if __name__ == "__main__":
    sys.exit(main())
