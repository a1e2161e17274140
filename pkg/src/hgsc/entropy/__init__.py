"""Entropy coders: adaptive binary range coder and a DEFLATE (RFC 1951) encoder/decoder."""

from .deflate import DeflateError, lz_compress, lz_decompress
from .rangecoder import ModelTable, RangeDecodeError, range_decode, range_encode

__all__ = ["DeflateError", "lz_compress", "lz_decompress", "ModelTable", "RangeDecodeError",
           "range_decode", "range_encode"]
