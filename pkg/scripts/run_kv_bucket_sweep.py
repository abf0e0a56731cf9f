#!/usr/bin/env python3
"""Sweep the key/value bucket size (nodes per key) on a packed model.

Small buckets waste no bytes but cost one get per node; large buckets
amortize gets but transfer mostly-unused data.  The table shows that
trade-off: fetch counts fall and transferred bytes rise with bucket size.
"""

import argparse
import json

from pacset.analysis import (WorkloadSpec, generate_synthetic_forest,
                             sweep_kv_bucket)
from pacset.codec import encode
from pacset.layout import LayoutConfig, pack
from pacset.model import annotate_cardinalities


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=808)
    ap.add_argument("--trees", type=int, default=64)
    ap.add_argument("--depth", type=int, default=10)
    ap.add_argument("--sizes", default="1,2,4,8,16,32,64,128,all")
    ap.add_argument("--block-bytes", type=int, default=4096)
    ap.add_argument("--observations", type=int, default=300)
    ap.add_argument("--out")
    args = ap.parse_args()

    forest = annotate_cardinalities(generate_synthetic_forest(
        seed=args.seed, num_trees=args.trees, depth=args.depth,
        skew="geometric", task="classify"))
    cfg = LayoutConfig(block_bytes=args.block_bytes, bin_depth=2)
    data = encode(pack(forest, cfg))
    workload = WorkloadSpec(repetitions=args.observations, seed=args.seed + 1)
    sizes = [s if s == "all" else int(s) for s in args.sizes.split(",")]
    report = sweep_kv_bucket(data, sizes, workload)

    print(f"{'bucket':<8}{'gets/obs':>10}{'KB moved/obs':>14}{'useful':>9}")
    n = args.observations
    for e in report["entries"]:
        print(f"{e['label']:<8}{e['fetches_mean']:>10.1f}"
              f"{e['bytes_transferred'] / n / 1024:>14.1f}"
              f"{e['useful_fraction']:>9.1%}")

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
