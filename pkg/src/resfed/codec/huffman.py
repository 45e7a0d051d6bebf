"""Canonical Huffman coding over bytes.

The code is fully described by 256 code lengths (0 = symbol absent), so the
table travels as 256 bytes. A single distinct symbol gets length 1.
"""

from __future__ import annotations

import heapq
from collections import Counter
from typing import NamedTuple

import numpy as np

from ..errors import CorruptDataError, EmptyPayloadError
from .bits import MAX_CODE_BITS, check_padding, pack_codes, unpack_bits

N_SYMBOLS = 256
TABLE_BITS = 20  # longest code decoded through a lookup table


class HuffmanCode(NamedTuple):
    lengths: bytes  # 256 code lengths
    payload: bytes  # zero-padded to a byte
    n_bits: int


def code_lengths(data: bytes) -> list[int]:
    freq = Counter(data)
    lengths = [0] * N_SYMBOLS
    if len(freq) == 1:
        lengths[next(iter(freq))] = 1
        return lengths
    # (weight, tiebreak, symbols); tiebreak keeps construction deterministic
    heap = [(count, sym, [sym]) for sym, count in sorted(freq.items())]
    heapq.heapify(heap)
    tiebreak = N_SYMBOLS
    while len(heap) > 1:
        w1, _, s1 = heapq.heappop(heap)
        w2, _, s2 = heapq.heappop(heap)
        for sym in s1 + s2:
            lengths[sym] += 1
        heapq.heappush(heap, (w1 + w2, tiebreak, s1 + s2))
        tiebreak += 1
    return lengths


def canonical_codes(lengths) -> dict[int, str]:
    """Symbol -> code bit string, assigned in (length, symbol) order."""
    codes = {}
    code, prev_len = 0, 0
    for sym in sorted((s for s in range(N_SYMBOLS) if lengths[s]), key=lambda s: (lengths[s], s)):
        code <<= lengths[sym] - prev_len
        prev_len = lengths[sym]
        codes[sym] = format(code, f"0{prev_len}b")
        code += 1
    return codes


def validate_lengths(lengths) -> None:
    if len(lengths) != N_SYMBOLS:
        raise CorruptDataError(f"code length table has {len(lengths)} entries, expected {N_SYMBOLS}")
    used = [l for l in lengths if l]
    if not used:
        raise CorruptDataError("code length table is empty")
    if len(used) == 1:
        if used[0] != 1:
            raise CorruptDataError("a lone symbol must have code length 1")
        return
    top = max(used)
    if sum(1 << (top - l) for l in used) != 1 << top:
        raise CorruptDataError("code lengths do not form a complete prefix code")


def huffman_encode(data: bytes) -> HuffmanCode:
    if not data:
        raise EmptyPayloadError("cannot Huffman-code empty input")
    lengths = code_lengths(data)
    if max(lengths) > MAX_CODE_BITS:
        raise EmptyPayloadError(f"Huffman code longer than {MAX_CODE_BITS} bits")  # needs ~2**56 symbols
    codes = canonical_codes(lengths)
    value = np.zeros(N_SYMBOLS, dtype=np.int64)
    for sym, code in codes.items():
        value[sym] = int(code, 2)
    symbols = np.frombuffer(data, dtype=np.uint8)
    payload, n_bits = pack_codes(value[symbols], np.asarray(lengths, dtype=np.int64)[symbols])
    return HuffmanCode(bytes(lengths), payload, n_bits)


def _lookup_tables(lengths, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Every ``width``-bit window -> (symbol, code length); length 0 marks an invalid prefix."""
    symbol = np.zeros(1 << width, dtype=np.uint8)
    size = np.zeros(1 << width, dtype=np.int64)
    for sym, code in canonical_codes(lengths).items():
        lo = int(code, 2) << (width - len(code))
        hi = lo + (1 << (width - len(code)))
        symbol[lo:hi] = sym
        size[lo:hi] = len(code)
    return symbol, size


def _chain(step: np.ndarray, stop: int, max_items: int | None) -> np.ndarray:
    """Successive positions 0, step[0], step[step[0]], ... by pointer doubling.

    ``step`` must map the absorbing nodes to themselves. Stops once
    ``stop`` (or any absorbing node) is reached or ``max_items`` + 1
    positions are known.
    """
    chain = np.zeros(1, dtype=np.int64)
    jump = step
    while True:
        done = max_items is not None and chain.size > max_items
        if done:
            chain = chain[: max_items + 1]
        absorbed = np.flatnonzero(chain >= stop)
        if absorbed.size:
            return chain[: absorbed[0] + 1]
        if done:
            return chain
        chain = np.concatenate([chain, jump[chain]])
        jump = jump[jump]


def huffman_decode(lengths: bytes, payload: bytes, n_symbols: int | None = None, n_bits: int | None = None) -> bytes:
    """Decode ``n_symbols`` symbols, or exactly ``n_bits`` bits, from ``payload``.

    With ``n_bits`` the last code must end exactly on that bit. Any bits
    beyond what was decoded must be zero padding within the final byte.
    """
    if (n_symbols is None) == (n_bits is None):
        raise ValueError("give exactly one of n_symbols and n_bits")
    validate_lengths(lengths)
    bits = unpack_bits(payload)
    limit = bits.size if n_bits is None else n_bits
    if limit > bits.size:
        raise CorruptDataError(f"payload holds {bits.size} bits, header claims {limit}")
    if n_symbols is not None and n_symbols > limit:
        raise CorruptDataError(f"{n_symbols} symbols cannot fit in {limit} bits")
    if max(lengths) > TABLE_BITS:
        return _decode_scalar(lengths, bits, limit, n_symbols)

    width = max(lengths)
    window = np.zeros(limit, dtype=np.int64)
    padded = np.concatenate([bits[:limit], np.zeros(width, dtype=np.uint8)])
    for k in range(width):
        window = (window << 1) | padded[k : k + limit]
    symbol, size = _lookup_tables(lengths, width)
    code_len = size[window]
    # graph over bit positions 0..limit; node limit + 1 absorbs invalid or overrunning codes
    bad = limit + 1
    ends = np.arange(limit) + code_len
    step = np.append(np.where((code_len > 0) & (ends <= limit), ends, bad), [limit, bad])
    chain = _chain(step, limit, n_symbols)
    starts = chain[:-1]
    if chain[-1] == bad:
        raise CorruptDataError("invalid Huffman code or payload ended inside a code")
    if n_symbols is not None and starts.size < n_symbols:
        raise CorruptDataError("Huffman payload ended inside a code")
    check_padding(bits, int(chain[-1]), "Huffman payload")
    return symbol[window[starts]].tobytes()


def _decode_scalar(lengths, bits: np.ndarray, limit: int, n_symbols: int | None) -> bytes:
    order = sorted((s for s in range(N_SYMBOLS) if lengths[s]), key=lambda s: (lengths[s], s))
    max_len = max(lengths)
    count = [0] * (max_len + 1)
    for s in order:
        count[lengths[s]] += 1
    first_code = [0] * (max_len + 1)
    first_index = [0] * (max_len + 1)
    code = index = 0
    for l in range(1, max_len + 1):
        code = (code + count[l - 1]) << 1
        first_code[l] = code
        first_index[l] = index
        index += count[l]

    s = bits.tolist()
    out = bytearray()
    cursor = 0
    while (n_symbols is None and cursor < limit) or (n_symbols is not None and len(out) < n_symbols):
        code = length = 0
        while True:
            if cursor >= limit:
                raise CorruptDataError("Huffman payload ended inside a code")
            code = (code << 1) | s[cursor]
            cursor += 1
            length += 1
            if length > max_len:
                raise CorruptDataError("invalid Huffman code")
            offset = code - first_code[length]
            if 0 <= offset < count[length]:
                out.append(order[first_index[length] + offset])
                break
    check_padding(bits, cursor, "Huffman payload")
    return bytes(out)
