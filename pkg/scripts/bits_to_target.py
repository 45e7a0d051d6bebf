"""Uplink and downlink volume each method needs to reach a target accuracy, and its bitsaving rate."""

import argparse
from pathlib import Path

from resfed.codec import DOWNLINK, UPLINK
from resfed.config import parse_config, with_overrides
from resfed.harness import MODE_LABELS, bitsaving_rate, mode_label_overrides, run_experiment, volume_to_target


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=Path(__file__).parent / "configs" / "toy.yaml")
    ap.add_argument("--target", type=float, default=0.85)
    ap.add_argument("--rounds", type=int, default=40)
    ap.add_argument("--sparsity", type=float, default=0.99)
    args = ap.parse_args()

    base = parse_config(
        args.config,
        [
            f"protocol.total_rounds={args.rounds}",
            f"protocol.uplink_compression.sparsity={args.sparsity}",
            f"protocol.downlink_compression.sparsity={args.sparsity}",
        ],
    )
    volumes = {}
    for label in MODE_LABELS:
        result = run_experiment(with_overrides(base, mode_label_overrides(label)))
        volumes[label] = [volume_to_target(result.records, args.target, d) for d in (UPLINK, DOWNLINK)]

    print(f"target accuracy {args.target}; volumes in Mb (1e6 bits)")
    print("series\tUL_Mb\tDL_Mb\tUL_BR\tDL_BR")
    ref = volumes["no_compression"]
    for label, vols in volumes.items():
        cells = [label]
        cells += ["-" if v is None else f"{v / 1e6:.3f}" for v in vols]
        cells += ["-" if v is None or r is None else f"{100 * bitsaving_rate(r, v):.2f}%" for v, r in zip(vols, ref)]
        print(*cells, sep="\t")


if __name__ == "__main__":
    main()
