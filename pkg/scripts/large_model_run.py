"""Res-1 on a ~50k-parameter MLP: final accuracy and per-round payload compression ratio."""

import argparse
from pathlib import Path

from resfed.config import parse_config
from resfed.harness import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=Path(__file__).parent / "configs" / "large_res1.yaml")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--out", type=Path, default=Path("out/large"))
    args = ap.parse_args()

    config = parse_config(args.config, args.set)
    result = run_experiment(config, args.out)
    compressed = result.records[config.protocol.warmup :]
    print(f"parameters          {len(result.model.params)}")
    print(f"final test accuracy {result.records[-1].test_accuracy:.4f}")
    print(f"min uplink CR       {min(r.uplink_cr for r in compressed):.2f}x")
    print(f"min downlink CR     {min(r.downlink_cr for r in result.records if r.downlink_cr > 1):.2f}x")


if __name__ == "__main__":
    main()
