import csv
import json

import pytest

from resfed.cli import main

TINY = [
    "--set", "data.n_samples=300",
    "--set", "data.dim=6",
    "--set", "data.n_classes=3",
    "--set", "model.hidden=[8]",
    "--set", "protocol.n_clients=3",
    "--set", "protocol.total_rounds=3",
]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_writes_rounds_and_summary(tmp_path, capsys):
    assert main(["run", *TINY, "--out", str(tmp_path)]) == 0
    assert len(_rows(tmp_path / "rounds.csv")) == 3
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["rounds"] == 3 and summary["config"]["seed"] == 0
    assert "test accuracy" in capsys.readouterr().out


def test_run_from_yaml_with_seed_flag(tmp_path):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text("protocol:\n  mode: no_compression\n")
    assert main(["run", "--config", str(cfg), *TINY, "--seed", "5", "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["config"]["seed"] == 5 and summary["config"]["protocol"]["mode"] == "no_compression"


def test_run_is_reproducible(tmp_path):
    for name in ("a", "b"):
        assert main(["run", *TINY, "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "rounds.csv").read_bytes() == (tmp_path / "b" / "rounds.csv").read_bytes()


def test_bad_config_reports_key(tmp_path, capsys):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text("protocol:\n  uplink_compression:\n    sparsity: 1.5\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "protocol.uplink_compression.sparsity" in err and "line 3" in err
    assert not (tmp_path / "o").exists()


def test_compare_runs_all_series(tmp_path, capsys):
    assert main(["compare", *TINY, "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "rounds.csv")
    series = ["no_compression", "compress_weights", "compress_gradients", "resfed-T0", "resfed-T1"]
    assert sorted({r["series"] for r in rows}) == sorted(series) and len(rows) == 15
    assert [s["series"] for s in json.loads((tmp_path / "summary.json").read_text())["series"]] == series
    out = capsys.readouterr().out
    assert all(s in out for s in series)


def test_sweep(tmp_path):
    assert main(["sweep", *TINY, "--axis", "sparsity", "--values", "0.5,0.9", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "sweep.csv")
    assert [r["sparsity"] for r in rows] == ["0.5", "0.9"]


def test_codec_bench_default_vector(tmp_path, capsys):
    assert main(["codec-bench", "--out", str(tmp_path)]) == 0
    assert "PASS" in capsys.readouterr().out
    row = json.loads((tmp_path / "summary.json").read_text())
    assert row["length"] == 61706 and row["round_trip"] == "PASS"
    assert 150 <= row["measured_cr"] <= 600


def test_codec_bench_file_input(tmp_path, capsys):
    import numpy as np

    path = tmp_path / "v.f32"
    path.write_bytes(np.linspace(-1, 1, 1000, dtype="<f4").tobytes())
    assert main(["codec-bench", "--input", str(path), "--sparsity", "0.9", "--bits", "4"]) == 0
    assert "PASS" in capsys.readouterr().out


@pytest.mark.parametrize("content, needle", [(b"\x00\x00\x80", "whole number"), (b"", "empty"), (b"\x00\x00\xc0\x7f", "non-finite")])
def test_codec_bench_rejects_bad_input(tmp_path, capsys, content, needle):
    path = tmp_path / "v.f32"
    path.write_bytes(content)
    assert main(["codec-bench", "--input", str(path)]) == 1
    assert needle in capsys.readouterr().err


def test_inspect_snapshots(tmp_path, capsys):
    args = ["run", *TINY, "--set", "checkpoint_rounds=[1, 3]", "--set", "snapshots=true", "--out", str(tmp_path)]
    assert main(args) == 0
    capsys.readouterr()
    assert main(["inspect", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 1 + 2 * 3
    assert any("residual" in line for line in lines)


def test_inspect_missing_and_empty(tmp_path, capsys):
    assert main(["inspect", str(tmp_path / "absent")]) == 1
    assert "no snapshot directory" in capsys.readouterr().err
    assert main(["inspect", str(tmp_path)]) == 0
    assert capsys.readouterr().out.split() == ["round", "vector", "p50", "p90", "max"]


def test_codec_bench_identity_is_uncompressed(tmp_path):
    assert main(["codec-bench", "--generate", "gaussian:1000", "--mode", "identity", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "summary.json").read_text())["measured_cr"] == 1.0


@pytest.mark.parametrize("seed", [0, 3])
def test_codec_bench_round_trips_generated_input(seed, capsys):
    assert main(["codec-bench", "--generate", "gaussian:5000", "--bits", "3", "--seed", str(seed)]) == 0
    assert "PASS" in capsys.readouterr().out


def test_config_echo_parses_back(tmp_path):
    import yaml

    from resfed.config import parse_config

    assert main(["run", *TINY, "--set", "target_accuracy=0.5", "--out", str(tmp_path)]) == 0
    echo = json.loads((tmp_path / "summary.json").read_text())["config"]
    (tmp_path / "echo.yaml").write_text(yaml.safe_dump(echo))
    expected = parse_config(overrides=[a for a in TINY if a != "--set"] + ["target_accuracy=0.5"])
    assert parse_config(tmp_path / "echo.yaml") == expected


def test_inspect_table_on_toy_run(tmp_path, capsys):
    args = ["run", *TINY, "--set", "protocol.total_rounds=6", "--set", "checkpoint_rounds=[4, 6]", "--set", "snapshots=true"]
    args += ["--set", "train.learning_rate=0.05", "--out", str(tmp_path)]
    assert main(args) == 0
    capsys.readouterr()
    assert main(["inspect", str(tmp_path / "snapshots")]) == 0
    direct = capsys.readouterr().out
    assert main(["inspect", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out == direct
    rows = [line.split() for line in out.strip().splitlines()[1:]]
    table = {(int(r[0]), r[1]): tuple(map(float, r[2:])) for r in rows}
    for p50, p90, top in table.values():
        assert 0 <= p50 <= p90 <= top
    for t in (4, 6):
        assert table[t, "residual"][0] < table[t, "weight"][0]


@pytest.mark.slow
def test_compare_res1_beats_compressed_baselines(tmp_path):
    toy = [
        "data.n_samples=4000", "data.spread=0.3", "model.hidden=[32]", "train.learning_rate=0.05",
        "protocol.total_rounds=30",
        "protocol.uplink_compression.mode=sparse_quant", "protocol.uplink_compression.sparsity=0.8",
        "protocol.downlink_compression.mode=sparse_quant", "protocol.downlink_compression.sparsity=0.8",
    ]
    args = ["compare"] + [x for item in toy for x in ("--set", item)] + ["--out", str(tmp_path)]
    assert main(args) == 0
    final = {s["series"]: s["final_test_accuracy"] for s in json.loads((tmp_path / "summary.json").read_text())["series"]}
    assert final["resfed-T1"] >= max(final["compress_weights"], final["compress_gradients"])
