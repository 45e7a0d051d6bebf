"""Final accuracy of every compression method, averaged over seeds, per partition.

    python3 scripts/compare_methods.py --seeds 5 --out out/compare
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from resfed.config import parse_config, with_overrides
from resfed.harness import MODE_LABELS, mode_label_overrides, run_experiment

HERE = Path(__file__).parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=HERE / "configs" / "toy.yaml")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--partitions", default="iid,label_shard")
    ap.add_argument("--out", type=Path, default=Path("out/compare"))
    args = ap.parse_args()

    base = parse_config(args.config)
    rows = []
    for partition in args.partitions.split(","):
        for label in MODE_LABELS:
            accs, up_bits = [], []
            for seed in range(args.seeds):
                overrides = {**mode_label_overrides(label), "partition.kind": partition, "seed": seed}
                result = run_experiment(with_overrides(base, overrides))
                accs.append(result.records[-1].test_accuracy)
                up_bits.append(result.summary()["uplink_bits"])
            rows.append(
                {
                    "partition": partition,
                    "series": label,
                    "mean_accuracy": round(float(np.mean(accs)), 4),
                    "std_accuracy": round(float(np.std(accs)), 4),
                    "mean_uplink_Mb": round(float(np.mean(up_bits)) / 1e6, 3),
                }
            )
            print(*rows[-1].values(), sep="\t", flush=True)

    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "methods.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


if __name__ == "__main__":
    main()
