"""Closed-loop LoD coding: kNN inverse-distance prediction from the growing anchor set,
uniform residual quantisation and DEFLATE.

Positions handed to this module are integer voxel coordinates, so distances
are exact and identical on both sides of the codec.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bytesio import ByteReader, ByteWriter
from .entropy.deflate import lz_compress, lz_decompress
from .geometry import CorruptStreamError
from .raht import quantize, unzigzag, zigzag
from .spatial import ExactKNN

DEFAULT_K = 3
EPS_REL = 1e-12

PRESET_BITS = {
    "high": {"sh_y": 10, "sh_uv": 8, "scale": 10, "rotation": 10, "opacity": 10},
    "low": {"sh_y": 8, "sh_uv": 6, "scale": 8, "rotation": 8, "opacity": 8},
    "max": {"sh_y": 16, "sh_uv": 16, "scale": 16, "rotation": 16, "opacity": 16},
}


@dataclass
class AnchorSet:
    """Reference primitives: global (Morton-rank) index, position, reconstructed attributes."""

    indices: np.ndarray
    positions: np.ndarray
    attrs: np.ndarray
    _knn: ExactKNN | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.indices)

    def knn(self) -> ExactKNN:
        if self._knn is None:
            # sorted by global index so kNN index ties resolve to the lower Morton rank
            order = np.argsort(self.indices, kind="stable")
            self.indices = self.indices[order]
            self.positions = self.positions[order]
            self.attrs = self.attrs[order]
            self._knn = ExactKNN(self.positions)
        return self._knn

    def merged(self, indices, positions, attrs) -> "AnchorSet":
        return AnchorSet(np.concatenate([self.indices, indices]),
                         np.concatenate([self.positions, positions]),
                         np.concatenate([self.attrs, attrs]))


def knn_predict(targets: np.ndarray, anchors: AnchorSet, k: int = DEFAULT_K,
                eps: float = 0.0) -> np.ndarray:
    """Inverse-distance weighted mean of the k nearest anchors, weights 1/(d + eps).

    A target at zero distance copies its (lowest-rank) coincident anchor.
    ``k`` larger than the anchor count is clamped.
    """
    if len(anchors) == 0:
        raise ValueError("prediction needs at least one anchor")
    if k < 1:
        raise ValueError("k must be at least 1")
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 3)
    tree = anchors.knn()
    idx, d2 = tree.query(targets, k)
    d = np.sqrt(d2)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = 1.0 / (d + eps)
    # accumulate neighbour by neighbour so the arithmetic order is fixed
    num = np.zeros((len(targets), anchors.attrs.shape[1]))
    den = np.zeros(len(targets))
    for j in range(idx.shape[1]):
        num += w[:, j, None] * anchors.attrs[idx[:, j]]
        den += w[:, j]
    with np.errstate(invalid="ignore"):
        pred = num / den[:, None]
    exact = d[:, 0] == 0
    pred[exact] = anchors.attrs[idx[exact, 0]]
    return pred


@dataclass(frozen=True)
class GroupRange:
    lo: float
    hi: float
    bits: int

    @property
    def step(self) -> float:
        span = self.hi - self.lo
        return (span if span > 0 else 1.0) / (1 << self.bits)


def group_ranges(values: np.ndarray, groups: dict[str, np.ndarray],
                 bits: dict[str, int]) -> dict[str, GroupRange]:
    out = {}
    for name, chans in groups.items():
        v = values[:, chans]
        if v.size:
            lo, hi = float(np.float64(v.min())), float(np.float64(v.max()))
        else:
            lo = hi = 0.0
        out[name] = GroupRange(lo, hi, int(bits[name]))
    return out


def _pack_planes(q: np.ndarray, groups: dict[str, np.ndarray]) -> bytes:
    parts = []
    for chans in groups.values():
        u = zigzag(q[:, chans].ravel())
        top = int(u.max()) if u.size else 0
        width = (top.bit_length() + 7) // 8
        parts.append(bytes([width]))
        if width:
            le = u.astype("<u8").view(np.uint8).reshape(-1, 8)[:, :width]
            parts.append(le.tobytes())
    return b"".join(parts)


def _unpack_planes(raw: bytes, groups: dict[str, np.ndarray], n: int) -> np.ndarray:
    n_channels = sum(len(c) for c in groups.values())
    q = np.zeros((n, n_channels), dtype=np.int64)
    pos = 0
    for name, chans in groups.items():
        if pos >= len(raw):
            raise CorruptStreamError(f"residual planes end before group {name}")
        width = raw[pos]
        pos += 1
        count = n * len(chans)
        if width > 8:
            raise CorruptStreamError(f"group {name}: residual width {width} bytes")
        if width:
            size = count * width
            if pos + size > len(raw):
                raise CorruptStreamError(f"group {name}: residual plane truncated")
            le = np.zeros((count, 8), dtype=np.uint8)
            le[:, :width] = np.frombuffer(raw, dtype=np.uint8, count=size, offset=pos).reshape(count, width)
            pos += size
            q[:, chans] = unzigzag(le.view("<u8").ravel()).reshape(n, len(chans))
    if pos != len(raw):
        raise CorruptStreamError(f"{len(raw) - pos} unexpected bytes after residual planes")
    return q


def encode_lod(positions: np.ndarray, actual: np.ndarray, anchors: AnchorSet,
               groups: dict[str, np.ndarray], bits: dict[str, int], k: int = DEFAULT_K,
               eps: float = 0.0) -> tuple[bytes, np.ndarray]:
    """Code one LoD (members in Morton order) against ``anchors``.

    Returns the payload and the reconstruction the decoder will produce.
    Payload: per group (lo f64, hi f64, bits u8), member count (varint),
    DEFLATE stream of zigzagged residual planes.
    """
    n = len(positions)
    ranges = group_ranges(actual, groups, bits)
    w = ByteWriter()
    for r in ranges.values():
        w.f64(r.lo).f64(r.hi).u8(r.bits)
    w.varint(n)
    if n == 0:
        w.raw(lz_compress(b""))
        return w.getvalue(), np.zeros((0, actual.shape[1]))
    pred = knn_predict(positions, anchors, k, eps)
    q = np.zeros(actual.shape, dtype=np.int64)
    recon = np.empty_like(pred)
    for name, chans in groups.items():
        step = ranges[name].step
        q[:, chans] = quantize(actual[:, chans] - pred[:, chans], step)
        recon[:, chans] = pred[:, chans] + q[:, chans] * step
    w.raw(lz_compress(_pack_planes(q, groups)))
    return w.getvalue(), recon


def decode_lod(buf: bytes, positions: np.ndarray, anchors: AnchorSet,
               groups: dict[str, np.ndarray], k: int = DEFAULT_K, eps: float = 0.0,
               what: str = "lod section") -> np.ndarray:
    r = ByteReader(buf, what)
    ranges = {name: GroupRange(r.f64(), r.f64(), r.u8()) for name in groups}
    n = r.varint()
    if n != len(positions):
        raise CorruptStreamError(f"{what}: {n} members coded, partition expects {len(positions)}")
    raw = lz_decompress(r.raw(r.remaining))
    n_channels = sum(len(c) for c in groups.values())
    if n == 0:
        if raw:
            raise CorruptStreamError(f"{what}: payload for an empty LoD")
        return np.zeros((0, n_channels))
    q = _unpack_planes(raw, groups, n)
    pred = knn_predict(positions, anchors, k, eps)
    recon = np.empty_like(pred)
    for name, chans in groups.items():
        step = ranges[name].step
        recon[:, chans] = pred[:, chans] + q[:, chans] * step
    return recon
