"""``resfed`` command-line entry point.

Subcommands: run, compare, sweep, codec-bench, inspect. Exit status is 0
only when every requested output was written and read back successfully.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
from pathlib import Path

import numpy as np
import yaml

from .codec import (
    CompressionConfig,
    compress,
    decompress,
    estimate_cr,
    kept_count,
    message_bits,
    measured_cr,
)
from .config import build_config, config_to_dict, parse_config, with_overrides
from .errors import FormatError, ResFedError
from .harness import (
    MODE_LABELS,
    RunResult,
    checkpoint_stats,
    dumps_json,
    mode_label_overrides,
    read_snapshot,
    records_to_csv,
    run_experiment,
    sweep,
    uplink_label,
    write_outputs,
)
from .params import ParamVector
from .rng import make_rng


def _config(args):
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return parse_config(args.config, overrides)


def _verify_run_dir(out: Path, expected_rows: int) -> None:
    """Read back what was written; raise if it does not parse or disagrees."""
    with open(out / "rounds.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != expected_rows:
        raise ResFedError(f"{out / 'rounds.csv'} has {len(rows)} rows, expected {expected_rows}")
    summary = json.loads((out / "summary.json").read_text())
    build_config(summary["config"])


def cmd_run(args) -> int:
    config = _config(args)
    out = Path(args.out)
    result = run_experiment(config, out)
    _verify_run_dir(out, config.protocol.total_rounds)
    s = result.summary()
    print(
        f"{config.protocol.mode}: {s['rounds']} rounds, test accuracy {s['final_test_accuracy']:.4f}, "
        f"{s['total_Mb']:.3f} Mb total, mean uplink CR {s['mean_uplink_cr'] or 0:.1f}"
    )
    print(f"wrote {out / 'rounds.csv'} and {out / 'summary.json'}")
    return 0


def _table(rows: list[dict]) -> str:
    if not rows:
        return ""
    cols = list(rows[0])
    cells = [[_cell(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.4g}"
    return "-" if v is None else str(v)


def cmd_compare(args) -> int:
    base = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results: dict[str, RunResult] = {}
    for label in MODE_LABELS:
        config = with_overrides(base, mode_label_overrides(label))
        results[label] = result = run_experiment(config)
        write_outputs(result, out / label)
    parts = [records_to_csv(r.records, {"series": label}) for label, r in results.items()]
    header = parts[0].split("\n", 1)[0]
    body = "".join(p.split("\n", 1)[1] for p in parts)
    (out / "rounds.csv").write_text(header + "\n" + body)
    rows = []
    for label, r in results.items():
        s = r.summary()
        rows.append(
            {
                "series": label,
                "final_test_accuracy": s["final_test_accuracy"],
                "uplink_bits": s["uplink_bits"],
                "downlink_bits": s["downlink_bits"],
                "mean_uplink_cr": s["mean_uplink_cr"],
            }
        )
    (out / "summary.json").write_text(dumps_json({"config": config_to_dict(base), "series": rows}))
    with open(out / "rounds.csv", newline="") as fh:
        n_rows = sum(1 for _ in csv.DictReader(fh))
    if n_rows != len(MODE_LABELS) * base.protocol.total_rounds:
        raise ResFedError(f"compare table has {n_rows} rows")
    for label in MODE_LABELS:
        _verify_run_dir(out / label, base.protocol.total_rounds)
    print(_table(rows))
    return 0


def _parse_values(text: str) -> list:
    return [yaml.safe_load(v) for v in text.split(",") if v.strip()]


def cmd_sweep(args) -> int:
    base = _config(args)
    rows, _ = sweep(base, args.axis, _parse_values(args.values), args.out)
    print(_table(rows))
    return 0


_GEN = re.compile(r"^gaussian:(\d+)$")


def _bench_vector(args) -> ParamVector:
    if args.input:
        raw = Path(args.input).read_bytes()
        if len(raw) % 4:
            raise FormatError(f"{args.input}: {len(raw)} bytes is not a whole number of float32 values", len(raw))
        if not raw:
            raise FormatError(f"{args.input}: empty input", 0)
        values = np.frombuffer(raw, dtype="<f4")
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise FormatError(f"{args.input}: non-finite value", 4 * int(bad[0]))
        return ParamVector(values)
    match = _GEN.match(args.generate)
    if not match:
        raise FormatError(f"cannot parse --generate {args.generate!r}; use gaussian:N")
    n = int(match.group(1))
    return ParamVector(make_rng(args.seed or 0, 0xBE9C).standard_normal(n).astype(np.float32))


def cmd_codec_bench(args) -> int:
    v = _bench_vector(args)
    config = CompressionConfig(args.mode, args.sparsity if args.mode != "identity" else 0.0, args.bits, args.entropy)
    r_bar, msg = compress(v, config)
    data = msg.to_bytes()
    ok = decompress(data).bits_equal(r_bar)
    bits = message_bits(msg)
    n = len(v)
    pruned = n - kept_count(n, config.sparsity) if args.mode != "identity" else 0
    estimate = estimate_cr(n, pruned, args.bits) if args.mode != "identity" else 1.0
    row = {
        "length": n,
        "mode": config.mode,
        "sparsity": config.sparsity,
        "bits": config.bits,
        "entropy": config.entropy,
        "payload_bits": bits.payload_bits,
        "header_bits": bits.header_bits,
        "measured_cr": measured_cr(msg),
        "estimate_cr": estimate,
        "round_trip": "PASS" if ok else "FAIL",
    }
    print(_table([row]))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        writer.writeheader()
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        (out / "codec_bench.csv").write_text(buf.getvalue())
        (out / "summary.json").write_text(dumps_json(row))
    return 0 if ok else 1


_SNAP = re.compile(r"^round_(\d+)\.bin$")


def cmd_inspect(args) -> int:
    root = Path(args.snapshots)
    snap_dir = root / "snapshots" if (root / "snapshots").is_dir() else root
    if not snap_dir.is_dir():
        raise FileNotFoundError(f"no snapshot directory at {root}")
    files = sorted(
        ((int(m.group(1)), p) for p in snap_dir.iterdir() if (m := _SNAP.match(p.name))),
        key=lambda x: x[0],
    )
    protocol = None
    if (snap_dir.parent / "summary.json").exists():
        protocol = build_config(json.loads((snap_dir.parent / "summary.json").read_text())["config"]).protocol
    mode = args.mode or (protocol.mode if protocol else "resfed")
    warmup = args.warmup if args.warmup is not None else (protocol.warmup if protocol else 1)
    rows = []
    for t, path in files:
        label = uplink_label(mode, t <= warmup)
        for name, q in checkpoint_stats(read_snapshot(path), label).items():
            rows.append({"round": t, "vector": name, "p50": q.p50, "p90": q.p90, "max": q.max})
    print(_table(rows) if rows else "round  vector  p50  p90  max")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resfed", description="Residual-based federated learning simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment_args(p):
        p.add_argument("--config", help="YAML experiment config")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted override, repeatable")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, help="overrides the config seed")

    p = sub.add_parser("run", help="run one experiment")
    experiment_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="all baselines and ResFed T=0/T=1 on one seed")
    experiment_args(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="one run per value along an axis")
    experiment_args(p)
    p.add_argument("--axis", required=True, choices=("sparsity", "mode", "partition"))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("codec-bench", help="compress one vector and report sizes")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", help="raw little-endian float32 file")
    src.add_argument("--generate", default="gaussian:61706", help="gaussian:N (default gaussian:61706)")
    p.add_argument("--mode", default="sparse_quant", choices=("identity", "sparse_quant"))
    p.add_argument("--sparsity", type=float, default=0.99)
    p.add_argument("--bits", type=int, default=1)
    p.add_argument("--entropy", default="huffman", choices=("huffman", "none"))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="also write codec_bench.csv and summary.json here")
    p.set_defaults(func=cmd_codec_bench)

    p = sub.add_parser("inspect", help="magnitude statistics of run snapshots")
    p.add_argument("snapshots", help="run output directory or its snapshots/ subdirectory")
    p.add_argument("--mode", help="protocol mode used for the run (read from summary.json if present)")
    p.add_argument("--warmup", type=int, help="raw warm-up rounds of the run (read from summary.json if present)")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ResFedError, OSError, ValueError) as exc:
        print(f"resfed {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
