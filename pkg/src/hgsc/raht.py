"""Region-adaptive hierarchical transform for anchor attributes, plus coefficient coding.

The transform walks up the anchors' octree one axis at a time (z, y, x within
each level, i.e. one Morton bit per step). Two occupied siblings along the
current axis with weights ``w1, w2`` merge through the orthonormal butterfly

    [DC]                     1        [ sqrt(w1)  sqrt(w2)] [a]
    [AC] = ------------------------ * [-sqrt(w2)  sqrt(w1)] [b]
            sqrt(w1 + w2)

and the DC carries on with weight ``w1 + w2``. Unpaired nodes pass through.
Output row 0 is the root DC; rows 1.. are ACs in step order, Morton order
within a step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .bytesio import ByteReader, ByteWriter
from .entropy.rangecoder import dec_bit, dec_init, enc_bit, enc_finish, enc_init, worst_case_size
from .geometry import CorruptStreamError, morton_encode

NEAR_LOSSLESS_STEPS = {"sh_y": 1e-4, "sh_uv": 2e-4, "scale": 1e-4, "rotation": 1e-4,
                       "opacity": 1e-4}
EG_SLOTS = 64
MAX_MAGNITUDE = 1 << 62


@dataclass(frozen=True)
class _Step:
    left: np.ndarray   # indices (pre-merge) of the lower sibling of each pair
    keep: np.ndarray   # pre-merge mask of nodes surviving the step
    a: np.ndarray      # sqrt(w1 / (w1 + w2))
    b: np.ndarray      # sqrt(w2 / (w1 + w2))


@dataclass(frozen=True, eq=False)
class RahtStructure:
    order: np.ndarray        # input row -> Morton rank
    steps: list
    root_weight: int


def raht_structure(coords: np.ndarray) -> RahtStructure:
    """Pairing schedule of the transform; depends only on the coordinates."""
    codes = morton_encode(np.asarray(coords, dtype=np.int64).reshape(-1, 3))
    order = np.argsort(codes, kind="stable")
    keys = codes[order]
    if len(keys) > 1 and np.any(keys[1:] == keys[:-1]):
        raise ValueError("duplicate anchor coordinates")
    w = np.ones(len(keys), dtype=np.int64)
    steps = []
    while len(keys) > 1:
        up = keys >> np.uint64(1)
        left = np.nonzero(up[:-1] == up[1:])[0]
        keys = up
        if len(left) == 0:
            continue
        w1 = w[left]
        w2 = w[left + 1]
        total = (w1 + w2).astype(np.float64)
        keep = np.ones(len(keys), dtype=bool)
        keep[left + 1] = False
        steps.append(_Step(left, keep, np.sqrt(w1 / total), np.sqrt(w2 / total)))
        w = w.copy()
        w[left] = w1 + w2
        w = w[keep]
        keys = keys[keep]
    return RahtStructure(order, steps, int(w.sum()) if len(w) else 0)


def raht_forward(coords: np.ndarray, attrs: np.ndarray,
                 structure: RahtStructure | None = None) -> np.ndarray:
    """(n, C) attributes -> (n, C) coefficients, row 0 = DC."""
    attrs = np.asarray(attrs, dtype=np.float64)
    if attrs.ndim == 1:
        attrs = attrs[:, None]
    s = structure or raht_structure(coords)
    vals = attrs[s.order].copy()
    acs = []
    for st in s.steps:
        a = vals[st.left]
        b = vals[st.left + 1]
        ca = st.a[:, None]
        cb = st.b[:, None]
        acs.append(cb * -a + ca * b)
        vals[st.left] = ca * a + cb * b
        vals = vals[st.keep]
    return np.concatenate([vals] + acs, axis=0) if len(attrs) else vals


def raht_inverse(coeffs: np.ndarray, coords: np.ndarray,
                 structure: RahtStructure | None = None) -> np.ndarray:
    """Inverse transform back to attributes in the row order of ``coords``."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.ndim == 1:
        coeffs = coeffs[:, None]
    s = structure or raht_structure(coords)
    n = len(s.order)
    if coeffs.shape[0] != n:
        raise CorruptStreamError(f"{coeffs.shape[0]} RAHT coefficients for {n} anchors")
    if n == 0:
        return coeffs.copy()
    vals = coeffs[:1].copy()
    end = n
    for st in reversed(s.steps):
        ac = coeffs[end - len(st.left):end]
        end -= len(st.left)
        full = np.empty((len(st.keep), coeffs.shape[1]))
        full[st.keep] = vals
        dc = full[st.left]
        ca = st.a[:, None]
        cb = st.b[:, None]
        full[st.left] = ca * dc - cb * ac
        full[st.left + 1] = cb * dc + ca * ac
        vals = full
    out = np.empty_like(vals)
    out[s.order] = vals
    return out


# -- coefficient coding -------------------------------------------------------

def quantize(x: np.ndarray, step) -> np.ndarray:
    """Uniform quantiser, round half away from zero."""
    q = np.sign(x) * np.floor(np.abs(x) / step + 0.5)
    if np.any(np.abs(q) >= MAX_MAGNITUDE):
        raise ValueError("quantised value out of range; step too small")
    return q.astype(np.int64)


def zigzag(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.int64)
    return ((v << 1) ^ (v >> 63)).astype(np.uint64)


def unzigzag(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.uint64)
    return ((u >> np.uint64(1)).astype(np.int64)) ^ -((u & np.uint64(1)).astype(np.int64))


@njit(cache=True)
def _eg0_encode(values, counts, out):
    st = enc_init()
    for i in range(values.shape[0]):
        x = values[i] + np.uint64(1)
        nbits = 0
        t = x
        while t:
            nbits += 1
            t >>= np.uint64(1)
        for j in range(nbits):
            enc_bit(st, out, counts, min(j, EG_SLOTS - 1), 1 if j == nbits - 1 else 0)
        for j in range(nbits - 2, -1, -1):
            bit = (x >> np.uint64(j)) & np.uint64(1)
            enc_bit(st, out, counts, EG_SLOTS + min(nbits - 2 - j, EG_SLOTS - 1), bit)
    return enc_finish(st, out)


@njit(cache=True)
def _eg0_decode(buf, n, counts, values):
    st = dec_init(buf)
    if st[3]:
        return -1
    for i in range(n):
        length = 0
        while dec_bit(st, buf, counts, min(length, EG_SLOTS - 1)) == 0:
            length += 1
            if st[3] or length > 63:
                return -1
        x = np.uint64(1)
        for j in range(length):
            x = (x << np.uint64(1)) | np.uint64(dec_bit(st, buf, counts, EG_SLOTS + min(j, EG_SLOTS - 1)))
        if st[3]:
            return -1
        values[i] = x - np.uint64(1)
    return n


def encode_integers(q: np.ndarray) -> bytes:
    """Zigzag + order-0 Exp-Golomb, each bit range coded under a per-bit-position model."""
    u = zigzag(np.ravel(q))
    nbits = int(np.sum(2 * np.floor(np.log2(u.astype(np.float64) + 1)) + 1)) + 64
    counts = np.ones((2 * EG_SLOTS, 2), dtype=np.int64)
    out = np.empty(worst_case_size(nbits), dtype=np.uint8)
    n = _eg0_encode(u, counts, out)
    return out[:n].tobytes()


def decode_integers(buf: bytes, n: int) -> np.ndarray:
    counts = np.ones((2 * EG_SLOTS, 2), dtype=np.int64)
    values = np.zeros(n, dtype=np.uint64)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if _eg0_decode(np.frombuffer(buf, dtype=np.uint8), n, counts, values) < 0:
        raise CorruptStreamError("coefficient stream truncated or malformed")
    return unzigzag(values)


def stored_steps(steps: dict[str, float]) -> dict[str, float]:
    """Steps as the decoder sees them (rounded through float32)."""
    return {g: float(np.float32(s)) for g, s in steps.items()}


def code_coeffs(coeffs: np.ndarray, groups: dict[str, np.ndarray],
                steps: dict[str, float]) -> tuple[bytes, np.ndarray]:
    """Quantise and code RAHT coefficients per channel group.

    Returns the payload and the dequantised coefficients the decoder will see.
    Layout per group: step (f32), coefficient count (varint), length-prefixed
    range-coded section.
    """
    steps = stored_steps(steps)
    w = ByteWriter()
    recon = np.zeros_like(coeffs)
    for name, chans in groups.items():
        step = steps[name]
        if step <= 0:
            raise ValueError(f"quantisation step for {name} must be positive")
        block = coeffs[:, chans]
        q = quantize(block.T, step)  # channel-major
        recon[:, chans] = (q * step).T
        w.f32(step).varint(q.size).section(encode_integers(q))
    return w.getvalue(), recon


def decode_coeffs(buf: bytes, groups: dict[str, np.ndarray], n: int) -> np.ndarray:
    r = ByteReader(buf, "anchor section")
    n_channels = sum(len(c) for c in groups.values())
    coeffs = np.zeros((n, n_channels))
    for name, chans in groups.items():
        step = r.f32()
        count = r.varint()
        if count != n * len(chans):
            raise CorruptStreamError(f"group {name}: {count} coefficients, expected {n * len(chans)}")
        q = decode_integers(r.section(), count).reshape(len(chans), n)
        coeffs[:, chans] = (q * step).T
    return coeffs


def encode_anchors(coords, attrs, groups, steps=NEAR_LOSSLESS_STEPS) -> tuple[bytes, np.ndarray]:
    """RAHT + coefficient coding; returns payload and decoder-identical reconstruction."""
    s = raht_structure(coords)
    payload, recon_coeffs = code_coeffs(raht_forward(coords, attrs, s), groups, steps)
    return payload, raht_inverse(recon_coeffs, coords, s)


def decode_anchors(buf, coords, groups) -> np.ndarray:
    s = raht_structure(coords)
    return raht_inverse(decode_coeffs(buf, groups, len(s.order)), coords, s)
