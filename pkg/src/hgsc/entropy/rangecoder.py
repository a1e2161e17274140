"""Adaptive binary range coder.

Stream format (bit-exact):

* 32-bit ``range``, 33-bit ``low`` with carry propagation through a one-byte
  cache (the LZMA scheme). Initial ``range = 0xFFFFFFFF``, ``low = 0``.
* A binary decision under model ``m`` with counts ``(c0, c1)`` splits the range
  at ``bound = range * c0 // (c0 + c1)``. Bit 0 keeps ``[low, low + bound)``,
  bit 1 keeps the rest.
* After every decision the model count of the coded bit is incremented; when
  ``c0 + c1`` exceeds 65536 both counts are halved, flooring at 1.
* Renormalisation shifts one byte out whenever ``range < 2**24``.
* The flush emits 5 bytes, so an empty sequence encodes to exactly 5 bytes.
  The first output byte is always the initial cache byte (zero).
"""

from __future__ import annotations

import numpy as np
from numba import njit

TOP = 1 << 24
MAX_TOTAL = 65536
FLUSH_BYTES = 5


class RangeDecodeError(ValueError):
    pass


class ModelTable:
    """Table of adaptive binary models, ``counts[m] = (c0, c1)``."""

    def __init__(self, n_models: int):
        self.counts = np.ones((n_models, 2), dtype=np.int64)

    def __len__(self) -> int:
        return self.counts.shape[0]

    def copy(self) -> "ModelTable":
        other = ModelTable(0)
        other.counts = self.counts.copy()
        return other

    def p_one(self, m: int) -> float:
        c0, c1 = self.counts[m]
        return c1 / (c0 + c1)


# -- jitted primitives -------------------------------------------------------
# Encoder state: st = [low, range, cache, cache_size, pos]
# Decoder state: st = [code, range, pos, error]


@njit(cache=True)
def enc_init():
    st = np.zeros(5, dtype=np.int64)
    st[1] = 0xFFFFFFFF
    st[3] = 1
    return st


@njit(cache=True)
def _shift_low(st, out):
    low = st[0]
    if low < 0xFF000000 or low >= 0x100000000:
        carry = low >> 32
        temp = st[2]
        while True:
            out[st[4]] = (temp + carry) & 0xFF
            st[4] += 1
            temp = 0xFF
            st[3] -= 1
            if st[3] == 0:
                break
        st[2] = (low >> 24) & 0xFF
    st[3] += 1
    st[0] = (low & 0x00FFFFFF) << 8


@njit(cache=True)
def _update(counts, m, bit):
    counts[m, bit] += 1
    if counts[m, 0] + counts[m, 1] > MAX_TOTAL:
        counts[m, 0] = max(1, counts[m, 0] >> 1)
        counts[m, 1] = max(1, counts[m, 1] >> 1)


@njit(cache=True)
def enc_bit(st, out, counts, m, bit):
    c0 = counts[m, 0]
    bound = (st[1] * c0) // (c0 + counts[m, 1])
    if bit == 0:
        st[1] = bound
    else:
        st[0] += bound
        st[1] -= bound
    _update(counts, m, bit)
    while st[1] < TOP:
        st[1] = st[1] << 8
        _shift_low(st, out)


@njit(cache=True)
def enc_finish(st, out):
    for _ in range(FLUSH_BYTES):
        _shift_low(st, out)
    return st[4]


@njit(cache=True)
def dec_init(buf):
    st = np.zeros(4, dtype=np.int64)
    st[1] = 0xFFFFFFFF
    if buf.shape[0] < FLUSH_BYTES:
        st[3] = 1
        return st
    code = 0
    for i in range(FLUSH_BYTES):
        code = ((code << 8) | buf[i]) & 0xFFFFFFFF
    st[0] = code
    st[2] = FLUSH_BYTES
    return st


@njit(cache=True)
def dec_bit(st, buf, counts, m):
    c0 = counts[m, 0]
    bound = (st[1] * c0) // (c0 + counts[m, 1])
    if st[0] < bound:
        st[1] = bound
        bit = 0
    else:
        st[0] -= bound
        st[1] -= bound
        bit = 1
    _update(counts, m, bit)
    while st[1] < TOP:
        st[1] = st[1] << 8
        if st[2] >= buf.shape[0]:
            st[3] = 1
            return bit
        st[0] = ((st[0] << 8) | buf[st[2]]) & 0xFFFFFFFF
        st[2] += 1
    return bit


def worst_case_size(n_decisions: int) -> int:
    # a decision costs at most log2(65536) = 16 bits
    return 2 * n_decisions + FLUSH_BYTES + 8


@njit(cache=True)
def _encode_bits(bits, model_ids, counts, out):
    st = enc_init()
    for i in range(bits.shape[0]):
        enc_bit(st, out, counts, model_ids[i], bits[i])
    return enc_finish(st, out)


@njit(cache=True)
def _decode_bits(buf, model_ids, counts, bits):
    st = dec_init(buf)
    if st[3]:
        return -1
    for i in range(model_ids.shape[0]):
        bits[i] = dec_bit(st, buf, counts, model_ids[i])
        if st[3]:
            return i
    return model_ids.shape[0]


def range_encode(bits, model_ids, models: ModelTable) -> bytes:
    """Code ``bits[i]`` under model ``model_ids[i]``; ``models`` adapts in place."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    model_ids = np.ascontiguousarray(model_ids, dtype=np.int64)
    if bits.shape != model_ids.shape:
        raise ValueError("bits and model_ids must have the same length")
    if bits.size and (model_ids.min() < 0 or model_ids.max() >= len(models)):
        raise ValueError("model id outside the model table")
    out = np.empty(worst_case_size(bits.size), dtype=np.uint8)
    n = _encode_bits(bits, model_ids, models.counts, out)
    return out[:n].tobytes()


def range_decode(buf, n_bits: int, model_ids, models: ModelTable) -> np.ndarray:
    """Inverse of :func:`range_encode` given the same model schedule."""
    model_ids = np.ascontiguousarray(model_ids, dtype=np.int64)
    if model_ids.shape[0] != n_bits:
        raise ValueError("model schedule length does not match n_bits")
    if n_bits == 0:
        return np.zeros(0, dtype=np.uint8)
    if model_ids.min() < 0 or model_ids.max() >= len(models):
        raise ValueError("model id outside the model table")
    data = np.frombuffer(bytes(buf), dtype=np.uint8)
    bits = np.zeros(n_bits, dtype=np.uint8)
    got = _decode_bits(data, model_ids, models.counts, bits)
    if got < 0:
        raise RangeDecodeError("range-coded stream shorter than its 5-byte preamble")
    if got < n_bits:
        raise RangeDecodeError(f"range-coded stream truncated after {got} of {n_bits} bits")
    return bits
