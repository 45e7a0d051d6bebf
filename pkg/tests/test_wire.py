import struct
import zlib

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from resfed.codec import (
    DOWNLINK,
    FRAMING_BITS,
    UPLINK,
    CompressionConfig,
    compress,
    decode_message,
    decompress,
    message_bits,
    measured_cr,
    raw_message,
)
from resfed.errors import CorruptDataError
from resfed.params import ParamVector

finite = st.floats(-1e4, 1e4, width=32, allow_nan=False)
configs = st.builds(
    CompressionConfig,
    mode=st.just("sparse_quant"),
    sparsity=st.sampled_from([0.0, 0.5, 0.9, 0.99]),
    bits=st.integers(1, 8),
    entropy=st.sampled_from(["none", "huffman"]),
)


def test_raw_layout_by_hand():
    v = ParamVector([1.5, -2.0])
    msg = raw_message(v, round=7, direction=DOWNLINK, client_id=3)
    framed = b"RFD1" + bytes([1]) + struct.pack("<I", 7) + bytes([1]) + struct.pack("<I", 3) + bytes([0])
    framed += struct.pack("<Q", 2) + struct.pack("<2f", 1.5, -2.0)
    expected = framed + struct.pack("<I", zlib.crc32(framed))
    assert msg.to_bytes() == expected
    bits = message_bits(msg)
    assert bits.header_bits == FRAMING_BITS == 8 * (23 + 4)
    assert bits.payload_bits == 32 * 2


def test_identity_is_exact():
    v = ParamVector(np.random.default_rng(0).standard_normal(100))
    r_bar, msg = compress(v, CompressionConfig())
    assert r_bar is v
    assert decompress(msg.to_bytes()).bits_equal(v)
    assert measured_cr(msg) == 1.0


def test_all_zero_residual_gives_empty_message():
    v = ParamVector(np.zeros(50))
    r_bar, msg = compress(v, CompressionConfig("sparse_quant", 0.9, 2))
    assert not r_bar.values.any()
    assert msg.sparse.nonzero_count == 0
    assert message_bits(msg).payload_bits == 8 * (10 + 4 * 4)
    assert decompress(msg.to_bytes()).bits_equal(r_bar)


@given(st.integers(1, 3000).flatmap(lambda n: arrays(np.float32, n, elements=finite)), configs, st.integers(0, 2**32 - 1))
def test_compress_roundtrip(values, config, rnd):
    r_bar, msg = compress(ParamVector(values), config, round=rnd, direction=UPLINK, client_id=rnd % 1000)
    decoded = decode_message(msg.to_bytes())
    assert decoded == msg
    assert decompress(decoded).bits_equal(r_bar)
    assert message_bits(msg).total == 8 * len(msg.to_bytes())


def test_header_corruption_detected():
    _, msg = compress(ParamVector(np.arange(1, 20, dtype=np.float32)), CompressionConfig("sparse_quant", 0.5, 1))
    data = bytearray(msg.to_bytes())
    for i in range(23):
        bad = bytearray(data)
        bad[i] ^= 0xFF
        with pytest.raises(CorruptDataError):
            decode_message(bytes(bad))


def test_cr_is_monotone_in_sparsity():
    v = ParamVector(np.random.default_rng(1).standard_normal(20000))
    crs = [measured_cr(compress(v, CompressionConfig("sparse_quant", s, 1))[1]) for s in (0.0, 0.5, 0.8, 0.9, 0.95, 0.99, 0.995)]
    assert crs == sorted(crs)


def test_huffman_shrinks_token_stream():
    v = ParamVector(np.random.default_rng(2).standard_normal(50000))
    plain = compress(v, CompressionConfig("sparse_quant", 0.99, 1, "none"))[1]
    coded = compress(v, CompressionConfig("sparse_quant", 0.99, 1, "huffman"))[1]
    assert message_bits(coded).payload_bits < message_bits(plain).payload_bits
