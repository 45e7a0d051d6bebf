import heapq
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from resfed.codec import (
    ESCAPE,
    SparseQuantized,
    canonical_codes,
    code_lengths,
    huffman_decode,
    huffman_encode,
    rle_decode,
    rle_encode,
    rle_tokens,
)
from resfed.errors import CorruptDataError, EmptyPayloadError


def sq(n, positions, symbols, bits=1):
    return SparseQuantized(n, positions, symbols, np.linspace(-1, 1, 1 << bits), bits)


def test_rle_token_examples():
    assert rle_tokens(sq(6, [3, 5], [1, 0])) == [(3, 1), (1, 0)]
    assert rle_tokens(sq(70000, [69999], [1])) == [(ESCAPE, None), (4464, 1)]
    assert rle_tokens(sq(3, [0, 1, 2], [0, 1, 1])) == [(0, 0), (0, 1), (0, 1)]


def test_rle_bit_layout():
    stream, n_bits = rle_encode(sq(6, [3, 5], [1, 0]))
    assert n_bits == 34
    assert stream == bytes([0x00, 0x03, 0x80, 0x00, 0x80])


@st.composite
def sparse_quantized(draw, max_len=200_000):
    bits = draw(st.integers(1, 8))
    n = draw(st.integers(1, max_len))
    count = draw(st.integers(0, min(n, 60)))
    positions = sorted(draw(st.sets(st.integers(0, n - 1), min_size=count, max_size=count)))
    symbols = draw(st.lists(st.integers(0, (1 << bits) - 1), min_size=count, max_size=count))
    codebook = np.arange(1, (1 << bits) + 1, dtype=np.float32)
    return SparseQuantized(n, positions, symbols, codebook, bits)


@given(sparse_quantized())
def test_rle_roundtrip(x):
    stream, _ = rle_encode(x)
    assert rle_decode(stream, x.length, x.bits, x.codebook, x.nonzero_count) == x


def test_rle_decode_errors():
    x = sq(10, [2, 9], [1, 1])
    stream, _ = rle_encode(x)
    with pytest.raises(CorruptDataError):
        rle_decode(stream[:-2], 10, 1, x.codebook, 2)
    with pytest.raises(CorruptDataError):
        rle_decode(stream, 9, 1, x.codebook, 2)  # second position lands past N
    with pytest.raises(CorruptDataError):
        rle_decode(stream + b"\x01", 10, 1, x.codebook, 2)


def optimal_cost(data: bytes) -> int:
    """Minimum total Huffman-coded length: sum of all merge weights (independent of code assignment)."""
    weights = sorted(Counter(data).values())
    if len(weights) == 1:
        return weights[0]
    heapq.heapify(weights)
    total = 0
    while len(weights) > 1:
        merged = heapq.heappop(weights) + heapq.heappop(weights)
        total += merged
        heapq.heappush(weights, merged)
    return total


def test_canonical_codes_hand_example():
    # "abracadabra": a=5, b=2, r=2, c=1, d=1. Merges: c+d=2, b+r=4, (cd)+(br)=6, a+6=11,
    # so a gets 1 bit and the rest 3; canonical order (length, byte value) then gives:
    codes = canonical_codes(code_lengths(b"abracadabra"))
    assert {chr(s): c for s, c in codes.items()} == {"a": "0", "b": "100", "c": "101", "d": "110", "r": "111"}
    assert huffman_encode(b"abracadabra").n_bits == optimal_cost(b"abracadabra") == 23


@given(st.binary(min_size=1, max_size=3000))
def test_huffman_roundtrip_and_optimality(data):
    code = huffman_encode(data)
    assert huffman_decode(code.lengths, code.payload, n_bits=code.n_bits) == data
    assert huffman_decode(code.lengths, code.payload, n_symbols=len(data)) == data
    assert code.n_bits == optimal_cost(data)
    counts = np.array(list(Counter(data).values()), dtype=np.float64)
    p = counts / counts.sum()
    entropy_bits = -(counts * np.log2(p)).sum()
    assert entropy_bits - 1e-9 <= code.n_bits <= entropy_bits + len(data) + 1e-9
    assert code.n_bits <= 8 * len(data) or len(set(data)) == 1


def test_single_symbol_gets_one_bit():
    code = huffman_encode(b"\x07" * 13)
    assert code.n_bits == 13 and code.lengths[7] == 1 and sum(code.lengths) == 1


def test_random_bytes_do_not_compress():
    data = np.random.default_rng(0).integers(0, 256, 1 << 16, dtype=np.uint8).tobytes()
    assert huffman_encode(data).n_bits >= 0.99 * 8 * len(data)


def test_huffman_errors():
    with pytest.raises(EmptyPayloadError):
        huffman_encode(b"")
    code = huffman_encode(b"hello world")
    with pytest.raises(CorruptDataError):
        huffman_decode(bytes(256), code.payload, n_bits=code.n_bits)
    with pytest.raises(CorruptDataError):
        huffman_decode(code.lengths, code.payload[:-1], n_bits=code.n_bits)
    with pytest.raises(CorruptDataError):
        huffman_decode(code.lengths, code.payload, n_symbols=len(b"hello world") + 5)
    bad = bytearray(code.lengths)
    bad[ord("h")] += 1  # breaks completeness
    with pytest.raises(CorruptDataError):
        huffman_decode(bytes(bad), code.payload, n_bits=code.n_bits)
