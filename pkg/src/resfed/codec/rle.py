"""Zero-run token stream for sparse quantized vectors.

Each nonzero becomes a token ``(gap:16, symbol:bits)`` where ``gap`` counts
the zeros since the previous nonzero. A gap of 0xFFFF is an escape: it
skips 65535 zeros and carries no symbol. Trailing zeros are implied by the
vector length. Bits are packed MSB-first and the stream is zero-padded to a
whole byte.
"""

from __future__ import annotations

import numpy as np

from ..errors import CorruptDataError
from .bits import check_padding, pack_codes, read_fields, unpack_bits
from .sparse import SparseQuantized

GAP_BITS = 16
ESCAPE = 0xFFFF
_BLOCK = 4096  # tokens decoded per vectorized step


def _gaps(sq: SparseQuantized) -> np.ndarray:
    return np.diff(sq.positions, prepend=-1) - 1


def rle_tokens(sq: SparseQuantized) -> list[tuple[int, int | None]]:
    """(gap, symbol) pairs; escapes have symbol None."""
    tokens = []
    for gap, sym in zip(_gaps(sq).tolist(), sq.symbols.tolist()):
        tokens += [(ESCAPE, None)] * (gap // ESCAPE)
        tokens.append((gap % ESCAPE, sym))
    return tokens


def rle_encode(sq: SparseQuantized) -> tuple[bytes, int]:
    """Token stream as (padded bytes, exact bit length)."""
    gaps = _gaps(sq)
    escapes = gaps // ESCAPE
    # expand each nonzero into its escape tokens followed by its regular token
    counts = escapes + 1
    owner = np.repeat(np.arange(gaps.size), counts)
    rank = np.arange(owner.size) - np.repeat(np.cumsum(counts) - counts, counts)
    regular = rank == escapes[owner]
    values = np.where(regular, ((gaps[owner] % ESCAPE) << sq.bits) | sq.symbols[owner].astype(np.int64), ESCAPE)
    lengths = np.where(regular, GAP_BITS + sq.bits, GAP_BITS)
    return pack_codes(values, lengths)


def rle_decode(stream: bytes, length: int, bits: int, codebook, nonzero_count: int) -> SparseQuantized:
    """Inverse of :func:`rle_encode`.

    Reads exactly ``nonzero_count`` symbols; whatever follows must be fewer
    than eight zero padding bits.
    """
    codebook = np.asarray(codebook, dtype=np.float32)
    stream_bits = unpack_bits(stream)
    total = stream_bits.size
    token_bits = GAP_BITS + bits
    if nonzero_count < 0 or nonzero_count > length or nonzero_count * token_bits > total:
        raise CorruptDataError(f"{nonzero_count} symbols cannot fit in {total} bits / length {length}")
    positions, symbols = [], []
    cursor, pos, skipped, remaining = 0, -1, 0, nonzero_count
    while remaining:
        take = min(remaining, (total - cursor) // token_bits, _BLOCK)
        if take:
            block = stream_bits[cursor : cursor + take * token_bits].reshape(take, token_bits)
            gaps = read_fields(block[:, :GAP_BITS], GAP_BITS)
            hits = np.flatnonzero(gaps == ESCAPE)
            ok = int(hits[0]) if hits.size else take
        else:
            ok = 0
            if total - cursor < GAP_BITS or read_fields(stream_bits[None, cursor : cursor + GAP_BITS], GAP_BITS)[0] != ESCAPE:
                raise CorruptDataError(f"token stream exhausted after {nonzero_count - remaining} of {nonzero_count} symbols")
        if ok:
            steps = gaps[:ok] + 1
            steps[0] += skipped
            run = pos + np.cumsum(steps)
            if run[-1] >= length:
                raise CorruptDataError(f"decoded position {int(run[-1])} outside vector of length {length}")
            positions.append(run)
            symbols.append(read_fields(block[:ok, GAP_BITS:], bits))
            pos, skipped = int(run[-1]), 0
            cursor += ok * token_bits
            remaining -= ok
        if remaining and (take == 0 or ok < take):
            # escape token at the cursor
            skipped += ESCAPE
            cursor += GAP_BITS
            if pos + skipped >= length:
                raise CorruptDataError("escape run passes the end of the vector")
    check_padding(stream_bits, cursor, "last token")
    pos_arr = np.concatenate(positions) if positions else np.zeros(0, np.int64)
    sym_arr = np.concatenate(symbols).astype(np.uint8) if symbols else np.zeros(0, np.uint8)
    return SparseQuantized(length, pos_arr, sym_arr, codebook, bits)
