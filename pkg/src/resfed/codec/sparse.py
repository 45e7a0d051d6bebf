"""Top-k sparsification and sign-aware scalar quantization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import CorruptDataError, EmptyPayloadError, InvalidConfigError
from ..params import ParamVector

IDENTITY = "identity"
SPARSE_QUANT = "sparse_quant"
HUFFMAN = "huffman"
NO_ENTROPY = "none"


@dataclass(frozen=True)
class CompressionConfig:
    mode: str = IDENTITY
    sparsity: float = 0.0
    bits: int = 1
    entropy: str = HUFFMAN

    def __post_init__(self):
        if self.mode not in (IDENTITY, SPARSE_QUANT):
            raise InvalidConfigError(f"unknown compression mode {self.mode!r}")
        if not 0 <= self.sparsity < 1:
            raise InvalidConfigError(f"sparsity must lie in [0, 1), got {self.sparsity}")
        if not 1 <= self.bits <= 8:
            raise InvalidConfigError(f"bits must lie in [1, 8], got {self.bits}")
        if self.entropy not in (NO_ENTROPY, HUFFMAN):
            raise InvalidConfigError(f"unknown entropy coder {self.entropy!r}")


@dataclass(frozen=True, eq=False)
class SparseQuantized:
    """Support, per-coordinate codebook symbols and the codebook itself."""

    length: int
    positions: np.ndarray  # int64, strictly increasing
    symbols: np.ndarray  # uint8, < 2**bits
    codebook: np.ndarray  # float32, 2**bits entries
    bits: int

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.int64).reshape(-1)
        symbols = np.asarray(self.symbols, dtype=np.uint8).reshape(-1)
        codebook = np.asarray(self.codebook, dtype=np.float32).reshape(-1)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "codebook", codebook)

    @property
    def nonzero_count(self) -> int:
        return int(self.positions.size)

    def validate(self) -> None:
        """Raise CorruptDataError unless every structural invariant holds."""
        if not 1 <= self.bits <= 8:
            raise CorruptDataError(f"bit width {self.bits} out of range")
        if self.codebook.size != 1 << self.bits:
            raise CorruptDataError(f"codebook has {self.codebook.size} entries, expected {1 << self.bits}")
        if not np.all(np.isfinite(self.codebook)):
            raise CorruptDataError("codebook holds non-finite values")
        if self.symbols.size != self.positions.size:
            raise CorruptDataError("symbol and position counts differ")
        if self.positions.size:
            if self.positions[0] < 0 or self.positions[-1] >= self.length:
                raise CorruptDataError(f"position outside [0, {self.length})")
            if np.any(np.diff(self.positions) <= 0):
                raise CorruptDataError("positions are not strictly increasing")
            if int(self.symbols.max()) >= self.codebook.size:
                raise CorruptDataError("symbol outside codebook")
            if np.any(self.codebook[self.symbols] == 0):
                raise CorruptDataError("nonzero position maps to a zero codebook entry")

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseQuantized):
            return NotImplemented
        return (
            self.length == other.length
            and self.bits == other.bits
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.symbols, other.symbols)
            and np.array_equal(self.codebook.view(np.uint32), other.codebook.view(np.uint32))
        )


def kept_count(n: int, sparsity: float) -> int:
    return max(1, math.floor((1.0 - sparsity) * n + 0.5))


def sparsify_topk(v: ParamVector, sparsity: float) -> ParamVector:
    """Keep the k largest-magnitude entries (ties to the lower index), zero the rest."""
    if not 0 <= sparsity < 1:
        raise InvalidConfigError(f"sparsity must lie in [0, 1), got {sparsity}")
    n = len(v)
    if n == 0:
        return v
    k = kept_count(n, sparsity)
    if k >= n:
        return v
    order = np.argsort(-np.abs(v.values), kind="stable")
    out = np.zeros(n, dtype=np.float32)
    keep = order[:k]
    out[keep] = v.values[keep]
    return v.like(out)


def _median(x: np.ndarray) -> np.float32:
    return np.float32(np.median(x.astype(np.float64))) if x.size else np.float32(0)


def quantize(v: ParamVector, bits: int) -> SparseQuantized:
    """Quantize the nonzeros of ``v`` onto a 2**bits symmetric codebook.

    bits=1: codebook ``[-median|neg|, +median|pos|]`` (0 for an absent sign).
    bits>1: 2**(bits-1) evenly spaced magnitudes per sign spanning
    [min|nz|, max|nz|]; each nonzero snaps to the nearest level of its own
    sign, ties going to the smaller magnitude. Codebook is sorted ascending.
    """
    if not 1 <= bits <= 8:
        raise InvalidConfigError(f"bits must lie in [1, 8], got {bits}")
    values = v.values
    positions = np.flatnonzero(values)
    if positions.size == 0:
        raise EmptyPayloadError("nothing to quantize: vector is all zeros")
    nz = values[positions]
    positive = nz > 0
    half = 1 << (bits - 1)
    if bits == 1:
        codebook = np.array([-_median(-nz[~positive]), _median(nz[positive])], dtype=np.float32)
        symbols = positive.astype(np.uint8)
    else:
        mags = np.abs(nz).astype(np.float64)
        lo, hi = mags.min(), mags.max()
        levels = (lo + (hi - lo) * np.arange(half) / (half - 1)).astype(np.float32)
        # argmin returns the first (smallest-magnitude) level on ties
        nearest = np.argmin(np.abs(mags[:, None] - levels[None, :].astype(np.float64)), axis=1)
        codebook = np.concatenate([-levels[::-1], levels]).astype(np.float32)
        symbols = np.where(positive, half + nearest, half - 1 - nearest).astype(np.uint8)
    return SparseQuantized(len(v), positions, symbols, codebook, bits)


def dequantize(sq: SparseQuantized) -> ParamVector:
    sq.validate()
    out = np.zeros(sq.length, dtype=np.float32)
    out[sq.positions] = sq.codebook[sq.symbols]
    return ParamVector(out)
