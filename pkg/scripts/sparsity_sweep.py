"""Accuracy and traffic against sparsity for Res-1 on the toy task.

Also reports the best accuracy each setting reaches within the uplink budget
that the sparsest setting spends in total.
"""

import argparse
from pathlib import Path

from resfed.config import parse_config
from resfed.harness import sweep

HERE = Path(__file__).parent


def best_within(result, budget):
    spent, best = 0, 0.0
    for r in result.records:
        spent += r.uplink_total
        if spent > budget:
            break
        best = max(best, r.test_accuracy)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=HERE / "configs" / "toy.yaml")
    ap.add_argument("--values", default="0.9,0.95,0.99,0.995")
    ap.add_argument("--rounds", type=int, default=20)
    ap.add_argument("--out", type=Path, default=Path("out/sparsity"))
    args = ap.parse_args()

    base = parse_config(args.config, [f"protocol.total_rounds={args.rounds}"])
    values = [float(v) for v in args.values.split(",")]
    rows, results = sweep(base, "sparsity", values, args.out, shared_seed=True)
    budget = min(r["uplink_bits"] for r in rows)
    print("sparsity\tfinal_acc\tuplink_Mb\tmean_up_cr\tacc_at_budget")
    for row, result in zip(rows, results):
        print(
            f"{row['sparsity']}\t{row['final_test_accuracy']:.4f}\t{row['uplink_bits'] / 1e6:.3f}\t"
            f"{row['mean_uplink_cr']:.1f}\t{best_within(result, budget):.4f}"
        )


if __name__ == "__main__":
    main()
