"""Raw DEFLATE (RFC 1951) coder.

The compressor does greedy longest-match LZ77 over a 32 KiB window
(hash chains on 3-byte prefixes) and picks, per block of symbols, whichever
of stored / fixed Huffman / dynamic Huffman is cheapest. The decompressor
accepts any conformant raw DEFLATE stream.
"""

from __future__ import annotations

import numpy as np
from numba import njit

WINDOW = 32768
MIN_MATCH = 3
MAX_MATCH = 258
MAX_CHAIN = 64
BLOCK_SYMBOLS = 16384
HASH_BITS = 15

LEN_BASE = np.array([3, 4, 5, 6, 7, 8, 9, 10, 11, 13, 15, 17, 19, 23, 27, 31, 35, 43,
                     51, 59, 67, 83, 99, 115, 131, 163, 195, 227, 258], dtype=np.int64)
LEN_EXTRA = np.array([0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3, 4, 4,
                      4, 4, 5, 5, 5, 5, 0], dtype=np.int64)
DIST_BASE = np.array([1, 2, 3, 4, 5, 7, 9, 13, 17, 25, 33, 49, 65, 97, 129, 193, 257,
                      385, 513, 769, 1025, 1537, 2049, 3073, 4097, 6145, 8193, 12289,
                      16385, 24577], dtype=np.int64)
DIST_EXTRA = np.array([0, 0, 0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6, 7, 7, 8, 8, 9, 9,
                       10, 10, 11, 11, 12, 12, 13, 13], dtype=np.int64)
CL_ORDER = np.array([16, 17, 18, 0, 8, 7, 9, 6, 10, 5, 11, 4, 12, 3, 13, 2, 14, 1, 15],
                    dtype=np.int64)


def _fixed_lengths():
    lit = np.zeros(288, dtype=np.int64)
    lit[:144] = 8
    lit[144:256] = 9
    lit[256:280] = 7
    lit[280:] = 8
    dist = np.full(32, 5, dtype=np.int64)
    return lit, dist


FIXED_LIT, FIXED_DIST = _fixed_lengths()

# inflate status codes
OK = 0
E_TRUNCATED = 1
E_BLOCK_TYPE = 2
E_STORED_LEN = 3
E_BAD_CODES = 4
E_BAD_SYMBOL = 5
E_BAD_DISTANCE = 6
E_TOO_MANY_LENGTHS = 7

_MESSAGES = {
    E_TRUNCATED: "unexpected end of stream",
    E_BLOCK_TYPE: "invalid block type 3",
    E_STORED_LEN: "stored block length does not match its complement",
    E_BAD_CODES: "invalid Huffman code lengths",
    E_BAD_SYMBOL: "invalid literal/length or distance symbol",
    E_BAD_DISTANCE: "distance reaches before start of output",
    E_TOO_MANY_LENGTHS: "code length repeat overruns the table",
}


class DeflateError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


# -- compressor --------------------------------------------------------------

@njit(cache=True)
def _lz77(data, max_chain):
    n = data.shape[0]
    sym_len = np.zeros(n + 1, dtype=np.int64)
    sym_val = np.zeros(n + 1, dtype=np.int64)
    head = np.full(1 << HASH_BITS, -1, dtype=np.int64)
    prev = np.full(WINDOW, -1, dtype=np.int64)
    mask = (1 << HASH_BITS) - 1
    ns = 0
    i = 0
    while i < n:
        best_len = 0
        best_dist = 0
        if i + MIN_MATCH <= n:
            h = ((data[i] << 10) ^ (data[i + 1] << 5) ^ data[i + 2]) & mask
            cand = head[h]
            chain = 0
            limit = min(MAX_MATCH, n - i)
            while cand >= 0 and i - cand <= WINDOW and chain < max_chain:
                if best_len == 0 or data[cand + best_len] == data[i + best_len]:
                    k = 0
                    while k < limit and data[cand + k] == data[i + k]:
                        k += 1
                    if k > best_len:
                        best_len = k
                        best_dist = i - cand
                        if k == limit:
                            break
                cand = prev[cand & (WINDOW - 1)]
                chain += 1
        if best_len >= MIN_MATCH:
            sym_len[ns] = best_len
            sym_val[ns] = best_dist
            step = best_len
        else:
            sym_len[ns] = 0
            sym_val[ns] = data[i]
            step = 1
        ns += 1
        for j in range(i, i + step):
            if j + MIN_MATCH <= n:
                hj = ((data[j] << 10) ^ (data[j + 1] << 5) ^ data[j + 2]) & mask
                prev[j & (WINDOW - 1)] = head[hj]
                head[hj] = j
        i += step
    return sym_len[:ns], sym_val[:ns]


@njit(cache=True)
def _len_code(length):
    c = 0
    while c < 28 and LEN_BASE[c + 1] <= length:
        c += 1
    return c


@njit(cache=True)
def _dist_code(dist):
    c = 0
    while c < 29 and DIST_BASE[c + 1] <= dist:
        c += 1
    return c


@njit(cache=True)
def _huffman_lengths(freq, max_bits):
    """Length-limited Huffman code lengths (two-queue build, Kraft repair)."""
    n = freq.shape[0]
    lengths = np.zeros(n, dtype=np.int64)
    used = 0
    for s in range(n):
        if freq[s] > 0:
            used += 1
    if used == 0:
        return lengths
    syms = np.empty(used, dtype=np.int64)
    k = 0
    for s in range(n):
        if freq[s] > 0:
            syms[k] = s
            k += 1
    if used == 1:
        lengths[syms[0]] = 1
        return lengths
    order = np.argsort(freq[syms], kind="mergesort")
    leaves = syms[order]
    total_nodes = 2 * used - 1
    weight = np.zeros(total_nodes, dtype=np.int64)
    parent = np.full(total_nodes, -1, dtype=np.int64)
    for j in range(used):
        weight[j] = freq[leaves[j]]
    li = 0
    qi = used
    nxt = used
    while nxt < total_nodes:
        for _ in range(2):
            if li < used and (qi >= nxt or weight[li] <= weight[qi]):
                child = li
                li += 1
            else:
                child = qi
                qi += 1
            weight[nxt] += weight[child]
            parent[child] = nxt
        nxt += 1
    depth = np.zeros(total_nodes, dtype=np.int64)
    for node in range(total_nodes - 2, -1, -1):
        depth[node] = depth[parent[node]] + 1
    max_depth = 0
    for j in range(used):
        if depth[j] > max_depth:
            max_depth = depth[j]
    if max_depth <= max_bits:
        for j in range(used):
            lengths[leaves[j]] = depth[j]
        return lengths
    bl_count = np.zeros(max_depth + 1, dtype=np.int64)
    for j in range(used):
        bl_count[depth[j]] += 1
    for d in range(max_bits + 1, max_depth + 1):
        bl_count[max_bits] += bl_count[d]
        bl_count[d] = 0
    total = 0
    for d in range(1, max_bits + 1):
        total += bl_count[d] << (max_bits - d)
    while total != (1 << max_bits):
        bl_count[max_bits] -= 1
        for d in range(max_bits - 1, 0, -1):
            if bl_count[d] > 0:
                bl_count[d] -= 1
                bl_count[d + 1] += 2
                break
        total -= 1
    # least frequent symbols take the longest codes
    j = 0
    for d in range(max_bits, 0, -1):
        for _ in range(bl_count[d]):
            lengths[leaves[j]] = d
            j += 1
    return lengths


@njit(cache=True)
def _canonical_codes(lengths):
    """Canonical codes, bit-reversed for LSB-first emission."""
    n = lengths.shape[0]
    bl_count = np.zeros(16, dtype=np.int64)
    for s in range(n):
        bl_count[lengths[s]] += 1
    bl_count[0] = 0
    next_code = np.zeros(16, dtype=np.int64)
    code = 0
    for b in range(1, 16):
        code = (code + bl_count[b - 1]) << 1
        next_code[b] = code
    codes = np.zeros(n, dtype=np.int64)
    for s in range(n):
        ln = lengths[s]
        if ln:
            c = next_code[ln]
            next_code[ln] += 1
            r = 0
            for _ in range(ln):
                r = (r << 1) | (c & 1)
                c >>= 1
            codes[s] = r
    return codes


@njit(cache=True)
def _put(st, out, value, nbits):
    # st = [bit buffer, bit count, byte position]
    st[0] |= value << st[1]
    st[1] += nbits
    while st[1] >= 8:
        out[st[2]] = st[0] & 0xFF
        st[2] += 1
        st[0] >>= 8
        st[1] -= 8


@njit(cache=True)
def _align(st, out):
    if st[1] > 0:
        out[st[2]] = st[0] & 0xFF
        st[2] += 1
    st[0] = 0
    st[1] = 0


@njit(cache=True)
def _rle_lengths(lengths, count):
    """Run-length code a code-length sequence with symbols 16/17/18."""
    syms = np.zeros(count, dtype=np.int64)
    extra = np.zeros(count, dtype=np.int64)
    ns = 0
    i = 0
    while i < count:
        v = lengths[i]
        run = 1
        while i + run < count and lengths[i + run] == v:
            run += 1
        if v == 0 and run >= 3:
            r = min(run, 138)
            if r >= 11:
                syms[ns] = 18
                extra[ns] = r - 11
            else:
                syms[ns] = 17
                extra[ns] = r - 3
            ns += 1
            i += r
        elif v != 0 and run >= 4:
            syms[ns] = v
            ns += 1
            r = min(run - 1, 6)
            syms[ns] = 16
            extra[ns] = r - 3
            ns += 1
            i += 1 + r
        else:
            syms[ns] = v
            ns += 1
            i += 1
    return syms[:ns], extra[:ns]


@njit(cache=True)
def _block_freqs(sym_len, sym_val, a, b):
    lit_freq = np.zeros(286, dtype=np.int64)
    dist_freq = np.zeros(30, dtype=np.int64)
    extra_bits = 0
    for s in range(a, b):
        if sym_len[s] == 0:
            lit_freq[sym_val[s]] += 1
        else:
            lc = _len_code(sym_len[s])
            lit_freq[257 + lc] += 1
            dc = _dist_code(sym_val[s])
            dist_freq[dc] += 1
            extra_bits += LEN_EXTRA[lc] + DIST_EXTRA[dc]
    lit_freq[256] = 1
    return lit_freq, dist_freq, extra_bits


@njit(cache=True)
def _write_symbols(st, out, sym_len, sym_val, a, b, lit_len, lit_code, dist_len, dist_code):
    for s in range(a, b):
        if sym_len[s] == 0:
            v = sym_val[s]
            _put(st, out, lit_code[v], lit_len[v])
        else:
            ln = sym_len[s]
            lc = _len_code(ln)
            _put(st, out, lit_code[257 + lc], lit_len[257 + lc])
            if LEN_EXTRA[lc]:
                _put(st, out, ln - LEN_BASE[lc], LEN_EXTRA[lc])
            d = sym_val[s]
            dc = _dist_code(d)
            _put(st, out, dist_code[dc], dist_len[dc])
            if DIST_EXTRA[dc]:
                _put(st, out, d - DIST_BASE[dc], DIST_EXTRA[dc])
    _put(st, out, lit_code[256], lit_len[256])


@njit(cache=True)
def _deflate(data, max_chain):
    n = data.shape[0]
    sym_len, sym_val = _lz77(data, max_chain)
    ns = sym_len.shape[0]
    out = np.zeros(n + 5 * (n // 65535 + 2) + 2 * ((ns // BLOCK_SYMBOLS) + 2) * 400 + 64,
                   dtype=np.uint8)
    st = np.zeros(3, dtype=np.int64)
    fixed_lit_code = _canonical_codes(FIXED_LIT)
    fixed_dist_code = _canonical_codes(FIXED_DIST)
    if ns == 0:
        _put(st, out, 1, 1)
        _put(st, out, 1, 2)
        _put(st, out, fixed_lit_code[256], FIXED_LIT[256])
        _align(st, out)
        return out[:st[2]]
    a = 0
    byte_pos = 0
    while a < ns:
        b = min(a + BLOCK_SYMBOLS, ns)
        final = 1 if b == ns else 0
        span = 0
        for s in range(a, b):
            span += sym_len[s] if sym_len[s] > 0 else 1
        lit_freq, dist_freq, extra_bits = _block_freqs(sym_len, sym_val, a, b)

        fixed_cost = 3 + extra_bits
        for s in range(286):
            fixed_cost += lit_freq[s] * FIXED_LIT[s]
        for s in range(30):
            fixed_cost += dist_freq[s] * FIXED_DIST[s]

        lit_len = _huffman_lengths(lit_freq, 15)
        dist_len = _huffman_lengths(dist_freq, 15)
        if dist_len.sum() == 0:
            dist_len[0] = 1
        hlit = 286
        while hlit > 257 and lit_len[hlit - 1] == 0:
            hlit -= 1
        hdist = 30
        while hdist > 1 and dist_len[hdist - 1] == 0:
            hdist -= 1
        all_len = np.zeros(hlit + hdist, dtype=np.int64)
        all_len[:hlit] = lit_len[:hlit]
        all_len[hlit:] = dist_len[:hdist]
        cl_syms, cl_extra = _rle_lengths(all_len, hlit + hdist)
        cl_freq = np.zeros(19, dtype=np.int64)
        for s in range(cl_syms.shape[0]):
            cl_freq[cl_syms[s]] += 1
        cl_len = _huffman_lengths(cl_freq, 7)
        hclen = 19
        while hclen > 4 and cl_len[CL_ORDER[hclen - 1]] == 0:
            hclen -= 1
        dyn_cost = 3 + 14 + 3 * hclen + extra_bits
        for s in range(cl_syms.shape[0]):
            c = cl_syms[s]
            dyn_cost += cl_len[c] + (2 if c == 16 else (3 if c == 17 else (7 if c == 18 else 0)))
        for s in range(286):
            dyn_cost += lit_freq[s] * lit_len[s]
        for s in range(30):
            dyn_cost += dist_freq[s] * dist_len[s]

        n_chunks = (span + 65534) // 65535
        stored_cost = n_chunks * (3 + 7 + 32) + 8 * span

        if stored_cost < fixed_cost and stored_cost < dyn_cost:
            done = 0
            while True:
                chunk = min(65535, span - done)
                last = final if done + chunk == span else 0
                _put(st, out, last, 1)
                _put(st, out, 0, 2)
                _align(st, out)
                _put(st, out, chunk, 16)
                _put(st, out, chunk ^ 0xFFFF, 16)
                for t in range(chunk):
                    out[st[2] + t] = data[byte_pos + done + t]
                st[2] += chunk
                done += chunk
                if done >= span:
                    break
        elif fixed_cost <= dyn_cost:
            _put(st, out, final, 1)
            _put(st, out, 1, 2)
            _write_symbols(st, out, sym_len, sym_val, a, b,
                           FIXED_LIT, fixed_lit_code, FIXED_DIST, fixed_dist_code)
        else:
            _put(st, out, final, 1)
            _put(st, out, 2, 2)
            _put(st, out, hlit - 257, 5)
            _put(st, out, hdist - 1, 5)
            _put(st, out, hclen - 4, 4)
            for i in range(hclen):
                _put(st, out, cl_len[CL_ORDER[i]], 3)
            cl_code = _canonical_codes(cl_len)
            for s in range(cl_syms.shape[0]):
                c = cl_syms[s]
                _put(st, out, cl_code[c], cl_len[c])
                if c == 16:
                    _put(st, out, cl_extra[s], 2)
                elif c == 17:
                    _put(st, out, cl_extra[s], 3)
                elif c == 18:
                    _put(st, out, cl_extra[s], 7)
            _write_symbols(st, out, sym_len, sym_val, a, b,
                           lit_len, _canonical_codes(lit_len), dist_len, _canonical_codes(dist_len))
        byte_pos += span
        a = b
    _align(st, out)
    return out[:st[2]]


# -- decompressor ------------------------------------------------------------

@njit(cache=True)
def _bits(ist, src, need):
    # ist = [bit buffer, bit count, byte position, error]
    while ist[1] < need:
        if ist[2] >= src.shape[0]:
            ist[3] = E_TRUNCATED
            return 0
        ist[0] |= np.int64(src[ist[2]]) << ist[1]
        ist[2] += 1
        ist[1] += 8
    val = ist[0] & ((1 << need) - 1)
    ist[0] >>= need
    ist[1] -= need
    return val


@njit(cache=True)
def _build_table(lengths):
    """Returns (count, symbol, status); status 0 ok, -1 oversubscribed, 1 incomplete."""
    count = np.zeros(16, dtype=np.int64)
    for s in range(lengths.shape[0]):
        count[lengths[s]] += 1
    offs = np.zeros(16, dtype=np.int64)
    symbol = np.zeros(lengths.shape[0], dtype=np.int64)
    if count[0] == lengths.shape[0]:
        return count, symbol, 2
    left = 1
    for ln in range(1, 16):
        left <<= 1
        left -= count[ln]
        if left < 0:
            return count, symbol, -1
    for ln in range(1, 15):
        offs[ln + 1] = offs[ln] + count[ln]
    for s in range(lengths.shape[0]):
        if lengths[s] != 0:
            symbol[offs[lengths[s]]] = s
            offs[lengths[s]] += 1
    if left > 0:
        # incomplete codes are only legal as a single one-bit code
        n_codes = lengths.shape[0] - count[0]
        if not (n_codes == 1 and count[1] == 1):
            return count, symbol, 1
    return count, symbol, 0


@njit(cache=True)
def _decode_sym(ist, src, count, symbol):
    code = 0
    first = 0
    index = 0
    for ln in range(1, 16):
        code |= _bits(ist, src, 1)
        if ist[3]:
            return -1
        cnt = count[ln]
        if code - cnt < first:
            return symbol[index + (code - first)]
        index += cnt
        first += cnt
        first <<= 1
        code <<= 1
    ist[3] = E_BAD_SYMBOL
    return -1


@njit(cache=True)
def _grow(out, need):
    if need <= out.shape[0]:
        return out
    size = out.shape[0] * 2
    while size < need:
        size *= 2
    bigger = np.zeros(size, dtype=np.uint8)
    bigger[:out.shape[0]] = out
    return bigger


@njit(cache=True)
def _inflate(src):
    out = np.zeros(max(1024, 4 * src.shape[0]), dtype=np.uint8)
    n = 0
    ist = np.zeros(4, dtype=np.int64)
    while True:
        final = _bits(ist, src, 1)
        btype = _bits(ist, src, 2)
        if ist[3]:
            return out[:n], ist[3], ist[2]
        if btype == 0:
            ist[0] = 0
            ist[1] = 0
            if ist[2] + 4 > src.shape[0]:
                return out[:n], E_TRUNCATED, ist[2]
            ln = np.int64(src[ist[2]]) | (np.int64(src[ist[2] + 1]) << 8)
            nln = np.int64(src[ist[2] + 2]) | (np.int64(src[ist[2] + 3]) << 8)
            if ln != (nln ^ 0xFFFF):
                return out[:n], E_STORED_LEN, ist[2]
            ist[2] += 4
            if ist[2] + ln > src.shape[0]:
                return out[:n], E_TRUNCATED, src.shape[0]
            out = _grow(out, n + ln)
            out[n:n + ln] = src[ist[2]:ist[2] + ln]
            n += ln
            ist[2] += ln
        elif btype == 3:
            return out[:n], E_BLOCK_TYPE, ist[2]
        else:
            if btype == 1:
                lit_len = FIXED_LIT
                dist_len = FIXED_DIST
            else:
                hlit = _bits(ist, src, 5) + 257
                hdist = _bits(ist, src, 5) + 1
                hclen = _bits(ist, src, 4) + 4
                if ist[3]:
                    return out[:n], ist[3], ist[2]
                if hlit > 286 or hdist > 30:
                    return out[:n], E_BAD_CODES, ist[2]
                cl_len = np.zeros(19, dtype=np.int64)
                for i in range(hclen):
                    cl_len[CL_ORDER[i]] = _bits(ist, src, 3)
                if ist[3]:
                    return out[:n], ist[3], ist[2]
                cl_count, cl_symbol, status = _build_table(cl_len)
                if status != 0:
                    return out[:n], E_BAD_CODES, ist[2]
                lengths = np.zeros(hlit + hdist, dtype=np.int64)
                idx = 0
                while idx < hlit + hdist:
                    sym = _decode_sym(ist, src, cl_count, cl_symbol)
                    if ist[3]:
                        return out[:n], ist[3], ist[2]
                    if sym < 16:
                        lengths[idx] = sym
                        idx += 1
                        continue
                    if sym == 16:
                        if idx == 0:
                            return out[:n], E_BAD_CODES, ist[2]
                        val = lengths[idx - 1]
                        rep = 3 + _bits(ist, src, 2)
                    elif sym == 17:
                        val = 0
                        rep = 3 + _bits(ist, src, 3)
                    else:
                        val = 0
                        rep = 11 + _bits(ist, src, 7)
                    if ist[3]:
                        return out[:n], ist[3], ist[2]
                    if idx + rep > hlit + hdist:
                        return out[:n], E_TOO_MANY_LENGTHS, ist[2]
                    for _ in range(rep):
                        lengths[idx] = val
                        idx += 1
                if lengths[256] == 0:
                    return out[:n], E_BAD_CODES, ist[2]
                lit_len = lengths[:hlit].copy()
                dist_len = lengths[hlit:].copy()
            lit_count, lit_symbol, status = _build_table(lit_len)
            if status != 0:
                return out[:n], E_BAD_CODES, ist[2]
            dist_count, dist_symbol, dstatus = _build_table(dist_len)
            if dstatus == -1 or dstatus == 1:
                return out[:n], E_BAD_CODES, ist[2]
            while True:
                sym = _decode_sym(ist, src, lit_count, lit_symbol)
                if ist[3]:
                    return out[:n], ist[3], ist[2]
                if sym < 256:
                    out = _grow(out, n + 1)
                    out[n] = sym
                    n += 1
                elif sym == 256:
                    break
                else:
                    sym -= 257
                    if sym >= 29:
                        return out[:n], E_BAD_SYMBOL, ist[2]
                    length = LEN_BASE[sym] + _bits(ist, src, LEN_EXTRA[sym])
                    if dstatus == 2:
                        return out[:n], E_BAD_SYMBOL, ist[2]
                    dsym = _decode_sym(ist, src, dist_count, dist_symbol)
                    if ist[3]:
                        return out[:n], ist[3], ist[2]
                    if dsym >= 30:
                        return out[:n], E_BAD_SYMBOL, ist[2]
                    dist = DIST_BASE[dsym] + _bits(ist, src, DIST_EXTRA[dsym])
                    if ist[3]:
                        return out[:n], ist[3], ist[2]
                    if dist > n:
                        return out[:n], E_BAD_DISTANCE, ist[2]
                    out = _grow(out, n + length)
                    for t in range(length):
                        out[n + t] = out[n - dist + t]
                    n += length
        if final:
            break
    return out[:n], OK, ist[2]


def lz_compress(data: bytes) -> bytes:
    """Compress ``data`` to a raw DEFLATE stream."""
    arr = np.frombuffer(bytes(data), dtype=np.uint8).astype(np.int64)
    return _deflate(arr, MAX_CHAIN).tobytes()


def lz_decompress(stream: bytes) -> bytes:
    """Inflate a raw DEFLATE stream; raises :class:`DeflateError` on malformed input."""
    src = np.frombuffer(bytes(stream), dtype=np.uint8)
    out, status, offset = _inflate(src)
    if status != OK:
        raise DeflateError(_MESSAGES[status], int(offset))
    return out.tobytes()
