"""|weight|, |gradient| and |uplink residual| quantiles at checkpoint rounds.

Snapshots land in <out>/snapshots and can be re-read with ``resfed inspect``.
"""

import argparse
from pathlib import Path

from resfed.config import parse_config
from resfed.harness import run_experiment

HERE = Path(__file__).parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=HERE / "configs" / "toy.yaml")
    ap.add_argument("--checkpoints", default="1,4,8,16,32")
    ap.add_argument("--window", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("out/magnitudes"))
    args = ap.parse_args()

    rounds = [int(t) for t in args.checkpoints.split(",")]
    config = parse_config(
        args.config,
        [
            f"protocol.total_rounds={max(rounds)}",
            f"protocol.predictor.window={args.window}",
            f"checkpoint_rounds={rounds}",
            "snapshots=true",
        ],
    )
    result = run_experiment(config, args.out)
    print("round\tvector\tp50\tp90\tmax")
    for t, stats in sorted(result.checkpoints.items()):
        for name, q in stats.items():
            print(f"{t}\t{name}\t{q.p50:.3e}\t{q.p90:.3e}\t{q.max:.3e}")


if __name__ == "__main__":
    main()
