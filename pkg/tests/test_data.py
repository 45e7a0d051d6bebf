import gzip
import struct
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from resfed.data import Dataset, make_blobs, partition_iid, partition_label_shard, read_idx, write_idx
from resfed.errors import FormatError, InvalidConfigError
from resfed.model import TrainConfig, evaluate, init_model, local_train


def rows(ds):
    return Counter(map(tuple, np.column_stack([ds.features, ds.labels]).tolist()))


def test_blobs_balanced_and_deterministic():
    ds = make_blobs(100, 2, 10, 0.1, seed=4)
    assert ds.class_counts().tolist() == [10] * 10
    again = make_blobs(100, 2, 10, 0.1, seed=4)
    assert np.array_equal(ds.features, again.features) and np.array_equal(ds.labels, again.labels)
    assert not np.array_equal(ds.features, make_blobs(100, 2, 10, 0.1, seed=5).features)


def test_blobs_rejects_more_classes_than_samples():
    with pytest.raises(InvalidConfigError):
        make_blobs(3, 2, 4, 0.1, seed=0)


def test_tight_blobs_are_learnable():
    train, test = make_blobs(800, 4, 4, 0.01, seed=1).split(0.25)
    model = init_model((4, 16, 4), seed=1)
    cfg = TrainConfig(learning_rate=0.1, batch_size=32)
    for epoch in range(15):
        model = local_train(model, train, cfg, round_index=epoch)
    assert evaluate(model, test)[0] >= 0.95


def test_random_labels_give_chance_accuracy():
    base = make_blobs(2000, 4, 10, 0.3, seed=2)
    shuffled = Dataset(base.features, np.random.default_rng(0).permutation(base.labels), 10)
    train, test = shuffled.split(0.5)
    model = init_model((4, 32, 10), seed=0)
    for epoch in range(5):
        model = local_train(model, train, TrainConfig(learning_rate=0.05), round_index=epoch)
    assert abs(evaluate(model, test)[0] - 0.1) <= 0.05


def _idx_pair(tmp_path, images, labels, gz=False):
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    write_idx(ip, lp, images, labels)
    if gz:
        for p in (ip, lp):
            p.with_suffix(".gz").write_bytes(gzip.compress(p.read_bytes()))
        ip, lp = ip.with_suffix(".gz"), lp.with_suffix(".gz")
    return ip, lp


@pytest.mark.parametrize("gz", [False, True])
def test_idx_roundtrip(tmp_path, gz):
    images = np.arange(2 * 3 * 4, dtype=np.uint8).reshape(2, 3, 4) * 10
    ip, lp = _idx_pair(tmp_path, images, [7, 1], gz)
    ds = read_idx(ip, lp)
    assert len(ds) == 2 and ds.dim == 12
    assert ds.labels.tolist() == [7, 1]
    assert ds.features.max() <= 1.0
    assert ds.features[1, 0] == np.float32(120 / 255)


def test_idx_errors_carry_offsets(tmp_path):
    ip, lp = _idx_pair(tmp_path, np.zeros((2, 2, 2), np.uint8), [0, 1])
    good = ip.read_bytes()
    ip.write_bytes(struct.pack(">I", 0x0803_0000) + good[4:])
    with pytest.raises(FormatError, match="offset 0"):
        read_idx(ip, lp)
    ip.write_bytes(good[:-1])
    with pytest.raises(FormatError, match="offset"):
        read_idx(ip, lp)
    ip.write_bytes(good)
    lp.write_bytes(struct.pack(">II", 0x801, 3) + bytes([0, 1, 2]))
    with pytest.raises(FormatError, match="images but"):
        read_idx(ip, lp)
    lp.write_bytes(struct.pack(">II", 0x801, 2) + bytes([0, 10]))
    with pytest.raises(FormatError, match="offset 9"):
        read_idx(ip, lp)


def test_iid_partition_sizes_and_union():
    ds = make_blobs(100, 3, 4, 1.0, seed=0)
    shards = partition_iid(ds, 10, seed=1)
    assert [len(s) for s in shards] == [10] * 10
    assert sum((rows(s) for s in shards), Counter()) == rows(ds)
    again = partition_iid(ds, 10, seed=1)
    assert all(np.array_equal(a.labels, b.labels) for a, b in zip(shards, again))


def test_iid_rejects_too_many_clients():
    with pytest.raises(InvalidConfigError):
        partition_iid(make_blobs(5, 2, 2, 1.0, seed=0), 6, seed=0)


def test_label_shard_two_classes_each():
    ds = make_blobs(1000, 4, 10, 1.0, seed=0)
    shards = partition_label_shard(ds, 5, 2, seed=3)
    assert all(len(np.unique(s.labels)) == 2 for s in shards)
    assert sum((rows(s) for s in shards), Counter()) == rows(ds)


def test_label_shard_balanced_sizes():
    ds = make_blobs(1000, 4, 10, 1.0, seed=0)
    sizes = [len(s) for s in partition_label_shard(ds, 10, 2, seed=0)]
    assert sizes == [100] * 10


def test_label_shard_all_classes():
    ds = make_blobs(300, 2, 3, 1.0, seed=0)
    shards = partition_label_shard(ds, 4, 3, seed=0)
    assert all(set(s.labels.tolist()) == {0, 1, 2} for s in shards)


@pytest.mark.parametrize("clients,per", [(3, 2), (5, 11)])
def test_label_shard_infeasible(clients, per):
    with pytest.raises(InvalidConfigError):
        partition_label_shard(make_blobs(100, 2, 10, 1.0, seed=0), clients, per, seed=0)


@given(
    n_classes=st.integers(2, 6),
    mult=st.integers(1, 4),
    seed=st.integers(0, 2**32),
    data=st.data(),
)
def test_label_shard_properties(n_classes, mult, seed, data):
    per_client = data.draw(st.integers(1, n_classes))
    # smallest client counts for which clients * per_client is a multiple of n_classes
    n_clients = mult * n_classes // int(np.gcd(n_classes, per_client))
    ds = make_blobs(n_classes * 40, 2, n_classes, 1.0, seed=seed % 1000)
    shards = partition_label_shard(ds, n_clients, per_client, seed)
    assert all(len(np.unique(s.labels)) == per_client for s in shards)
    sizes = [len(s) for s in shards]
    assert max(sizes) - min(sizes) <= per_client
    assert sum(sizes) == len(ds)
