"""ResidualMessage binary framing.

Layout (little-endian)::

    header   magic "RFD1" | version u8 | round u32 | direction u8 |
             client_id u32 | scheme u8 | N u64                      (23 bytes)
    raw      N x float32
    sparse   bits u8 | entropy u8 | nonzero_count u64 | codebook 2**bits x float32 |
             [huffman: 256 code lengths | payload bit count u64] | token payload
    trailer  CRC-32 of everything above, u32                         (4 bytes)

Header and trailer count as framing bits; everything between is payload.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ..errors import CorruptDataError, InvalidConfigError
from ..params import ParamVector
from .huffman import N_SYMBOLS, huffman_decode, huffman_encode
from .rle import rle_decode, rle_encode
from .sparse import HUFFMAN, IDENTITY, NO_ENTROPY, CompressionConfig, SparseQuantized, dequantize, quantize, sparsify_topk

MAGIC = b"RFD1"
VERSION = 1
HEADER = struct.Struct("<4sBIBIBQ")
TRAILER = struct.Struct("<I")
SPARSE_HEAD = struct.Struct("<BBQ")
HEADER_BYTES = HEADER.size
FRAMING_BITS = 8 * (HEADER.size + TRAILER.size)
MAX_LENGTH = 1 << 40

UPLINK, DOWNLINK = 0, 1
RAW, SPARSE = 0, 1
_ENTROPY_CODES = {NO_ENTROPY: 0, HUFFMAN: 1}
_ENTROPY_NAMES = {v: k for k, v in _ENTROPY_CODES.items()}


@dataclass(frozen=True, eq=False)
class ResidualMessage:
    """One transmitted vector: raw float32 values or a sparse quantized payload."""

    round: int
    direction: int
    client_id: int
    scheme: int
    length: int
    values: np.ndarray | None = None  # raw scheme
    sparse: SparseQuantized | None = None  # sparse scheme
    entropy: str = NO_ENTROPY
    _encoded: bytes | None = field(default=None, repr=False)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ResidualMessage):
            return NotImplemented
        head = (self.round, self.direction, self.client_id, self.scheme, self.length)
        if head != (other.round, other.direction, other.client_id, other.scheme, other.length):
            return False
        if self.scheme == RAW:
            return np.array_equal(self.values.view(np.uint32), other.values.view(np.uint32))
        return self.entropy == other.entropy and self.sparse == other.sparse

    def to_bytes(self) -> bytes:
        if self._encoded is None:
            object.__setattr__(self, "_encoded", encode_message(self))
        return self._encoded


class MessageBits(NamedTuple):
    header_bits: int
    payload_bits: int

    @property
    def total(self) -> int:
        return self.header_bits + self.payload_bits


def _encode_sparse_body(sq: SparseQuantized, entropy: str) -> bytes:
    if sq.nonzero_count == 0:
        entropy = NO_ENTROPY
    parts = [SPARSE_HEAD.pack(sq.bits, _ENTROPY_CODES[entropy], sq.nonzero_count)]
    parts.append(sq.codebook.astype("<f4").tobytes())
    if sq.nonzero_count:
        tokens, _ = rle_encode(sq)
        if entropy == HUFFMAN:
            code = huffman_encode(tokens)
            parts += [code.lengths, struct.pack("<Q", code.n_bits), code.payload]
        else:
            parts.append(tokens)
    return b"".join(parts)


def encode_message(msg: ResidualMessage) -> bytes:
    header = HEADER.pack(MAGIC, VERSION, msg.round, msg.direction, msg.client_id, msg.scheme, msg.length)
    if msg.scheme == RAW:
        body = np.asarray(msg.values, dtype="<f4").tobytes()
    else:
        body = _encode_sparse_body(msg.sparse, msg.entropy)
    framed = header + body
    return framed + TRAILER.pack(zlib.crc32(framed))


def _decode_sparse_body(body: bytes, length: int) -> tuple[SparseQuantized, str]:
    if len(body) < SPARSE_HEAD.size:
        raise CorruptDataError("sparse body shorter than its fixed fields")
    bits, entropy_code, nnz = SPARSE_HEAD.unpack_from(body, 0)
    if not 1 <= bits <= 8:
        raise CorruptDataError(f"bit width {bits} out of range")
    if entropy_code not in _ENTROPY_NAMES:
        raise CorruptDataError(f"unknown entropy code {entropy_code}")
    entropy = _ENTROPY_NAMES[entropy_code]
    if nnz > length:
        raise CorruptDataError(f"{nnz} nonzeros in a vector of length {length}")
    cursor = SPARSE_HEAD.size
    cb_bytes = 4 * (1 << bits)
    if len(body) < cursor + cb_bytes:
        raise CorruptDataError("truncated codebook")
    codebook = np.frombuffer(body, dtype="<f4", count=1 << bits, offset=cursor).astype(np.float32)
    cursor += cb_bytes
    if nnz == 0:
        if entropy != NO_ENTROPY or cursor != len(body):
            raise CorruptDataError("empty sparse message carries a payload")
        sq = SparseQuantized(length, np.zeros(0), np.zeros(0), codebook, bits)
    else:
        if entropy == HUFFMAN:
            if len(body) < cursor + N_SYMBOLS + 8:
                raise CorruptDataError("truncated Huffman table")
            lengths = body[cursor : cursor + N_SYMBOLS]
            (n_bits,) = struct.unpack_from("<Q", body, cursor + N_SYMBOLS)
            cursor += N_SYMBOLS + 8
            payload = body[cursor:]
            if len(payload) != (n_bits + 7) // 8:
                raise CorruptDataError(f"Huffman payload is {len(payload)} bytes, header claims {n_bits} bits")
            tokens = huffman_decode(lengths, payload, n_bits=n_bits)
        else:
            tokens = body[cursor:]
        sq = rle_decode(tokens, length, bits, codebook, nnz)
    sq.validate()
    return sq, entropy


def decode_message(data: bytes) -> ResidualMessage:
    data = bytes(data)
    if len(data) < HEADER.size + TRAILER.size:
        raise CorruptDataError(f"message of {len(data)} bytes is shorter than its framing")
    (crc,) = TRAILER.unpack_from(data, len(data) - TRAILER.size)
    framed = data[: -TRAILER.size]
    if zlib.crc32(framed) != crc:
        raise CorruptDataError("CRC-32 mismatch")
    magic, version, rnd, direction, client_id, scheme, length = HEADER.unpack_from(framed, 0)
    if magic != MAGIC:
        raise CorruptDataError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptDataError(f"unsupported version {version}")
    if direction not in (UPLINK, DOWNLINK):
        raise CorruptDataError(f"unknown direction {direction}")
    if length > MAX_LENGTH:
        raise CorruptDataError(f"vector length {length} exceeds {MAX_LENGTH}")
    body = framed[HEADER.size :]
    common = dict(round=rnd, direction=direction, client_id=client_id, scheme=scheme, length=length)
    if scheme == RAW:
        if len(body) != 4 * length:
            raise CorruptDataError(f"raw body is {len(body)} bytes, expected {4 * length}")
        values = np.frombuffer(body, dtype="<f4").astype(np.float32)
        if not np.all(np.isfinite(values)):
            raise CorruptDataError("raw body holds non-finite values")
        return ResidualMessage(values=values, _encoded=data, **common)
    if scheme == SPARSE:
        sq, entropy = _decode_sparse_body(body, length)
        return ResidualMessage(sparse=sq, entropy=entropy, _encoded=data, **common)
    raise CorruptDataError(f"unknown scheme {scheme}")


def message_bits(msg: ResidualMessage) -> MessageBits:
    """Exact serialized size split into framing (header + CRC) and payload bits."""
    total = 8 * len(msg.to_bytes())
    return MessageBits(FRAMING_BITS, total - FRAMING_BITS)


def raw_message(v: ParamVector, *, round: int = 0, direction: int = UPLINK, client_id: int = 0) -> ResidualMessage:
    return ResidualMessage(round, direction, client_id, RAW, len(v), values=v.values)


def compress(
    r: ParamVector, config: CompressionConfig, *, round: int = 0, direction: int = UPLINK, client_id: int = 0
) -> tuple[ParamVector, ResidualMessage]:
    """Lossy-compress ``r``; returns (what the receiver will reconstruct, the message).

    The reconstruction is computed through the same dequantization the
    receiver runs, so both ends hold bit-identical vectors.
    """
    if not isinstance(config, CompressionConfig):
        raise InvalidConfigError("config must be a CompressionConfig")
    if config.mode == IDENTITY:
        return r, raw_message(r, round=round, direction=direction, client_id=client_id)
    sparse = sparsify_topk(r, config.sparsity)
    if not np.any(sparse.values):
        sq = SparseQuantized(len(r), np.zeros(0), np.zeros(0), np.zeros(1 << config.bits), config.bits)
        entropy = NO_ENTROPY
    else:
        sq = quantize(sparse, config.bits)
        entropy = config.entropy
    msg = ResidualMessage(round, direction, client_id, SPARSE, len(r), sparse=sq, entropy=entropy)
    return r.like(dequantize(sq).values), msg


def decompress(msg: ResidualMessage | bytes) -> ParamVector:
    if isinstance(msg, (bytes, bytearray, memoryview)):
        msg = decode_message(msg)
    if msg.scheme == RAW:
        return ParamVector(msg.values)
    return dequantize(msg.sparse)


def estimate_cr(n: int, pruned: int, bits: int) -> float:
    """Analytic ratio ``32 N / ((N - M) 2**L + M + 2 L 32)``, entropy coding ignored."""
    if not 0 <= pruned <= n:
        raise InvalidConfigError(f"pruned count {pruned} outside [0, {n}]")
    if bits < 1:
        raise InvalidConfigError("bits must be >= 1")
    return n * 32 / ((n - pruned) * 2**bits + pruned + 2 * bits * 32)


def measured_cr(msg: ResidualMessage) -> float:
    """32 N over payload bits (framing excluded)."""
    payload = message_bits(msg).payload_bits
    return 32 * msg.length / payload if payload else float("inf")
