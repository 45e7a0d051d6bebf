"""MSB-first bit packing helpers shared by the token and Huffman coders."""

from __future__ import annotations

import numpy as np

MAX_CODE_BITS = 56  # widest code packable through int64 arithmetic


def pack_codes(values: np.ndarray, lengths: np.ndarray) -> tuple[bytes, int]:
    """Concatenate ``values[i]`` written in ``lengths[i]`` bits, MSB first, zero-padded to a byte."""
    values = np.asarray(values, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    if values.size == 0:
        return b"", 0
    width = int(lengths.max())
    if width > MAX_CODE_BITS:
        raise ValueError(f"code of {width} bits is too wide to pack")
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    aligned = values << (width - lengths)  # left-align every code in a `width`-bit field
    matrix = ((aligned[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
    bits = matrix[shifts[None, :] >= (width - lengths)[:, None]]
    return np.packbits(bits).tobytes(), int(bits.size)


def unpack_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def read_fields(bits: np.ndarray, width: int) -> np.ndarray:
    """Rows of ``width`` bits (a 2-D array) to unsigned integers."""
    weights = np.int64(1) << np.arange(width - 1, -1, -1, dtype=np.int64)
    return bits.astype(np.int64) @ weights


def check_padding(bits: np.ndarray, cursor: int, what: str) -> None:
    from ..errors import CorruptDataError

    tail = bits[cursor:]
    if tail.size >= 8 or tail.any():
        raise CorruptDataError(f"unexpected data after the {what}")
