"""Deep residual compression: top-k, quantization, zero-run tokens, Huffman, framing."""

from .huffman import HuffmanCode, canonical_codes, code_lengths, huffman_decode, huffman_encode
from .rle import ESCAPE, GAP_BITS, rle_decode, rle_encode, rle_tokens
from .sparse import (
    HUFFMAN,
    IDENTITY,
    NO_ENTROPY,
    SPARSE_QUANT,
    CompressionConfig,
    SparseQuantized,
    dequantize,
    kept_count,
    quantize,
    sparsify_topk,
)
from .wire import (
    DOWNLINK,
    FRAMING_BITS,
    RAW,
    SPARSE,
    UPLINK,
    MessageBits,
    ResidualMessage,
    compress,
    decode_message,
    decompress,
    encode_message,
    estimate_cr,
    measured_cr,
    message_bits,
    raw_message,
)
