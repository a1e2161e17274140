"""Octree geometry coding.

Positions are voxelised on a 2^d grid spanning the bounding cube, the unique
voxels are sorted in Morton order and the octree is serialised breadth-first
as occupancy bytes. Each byte is range coded as 8 binary decisions (octant 0
first) under a context of (parent occupancy byte, octant, bits already coded
in this byte).

Morton layout: bit ``3i + 2`` holds x bit ``i``, ``3i + 1`` y and ``3i`` z, so
the octant of a child is ``(x << 2) | (y << 1) | z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .bytesio import ByteReader, ByteWriter
from .entropy.rangecoder import dec_bit, dec_init, enc_bit, enc_finish, enc_init, worst_case_size

MAX_DEPTH = 16
DEFAULT_DEPTH = 12
N_CONTEXTS = 256 * 8 * 128


class CorruptStreamError(ValueError):
    pass


def _spread3(v: np.ndarray) -> np.ndarray:
    v = v.astype(np.uint64) & np.uint64(0x1FFFFF)
    v = (v | (v << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
    v = (v | (v << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
    v = (v | (v << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
    v = (v | (v << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
    v = (v | (v << np.uint64(2))) & np.uint64(0x1249249249249249)
    return v


def _compact3(v: np.ndarray) -> np.ndarray:
    v = v.astype(np.uint64) & np.uint64(0x1249249249249249)
    v = (v | (v >> np.uint64(2))) & np.uint64(0x10C30C30C30C30C3)
    v = (v | (v >> np.uint64(4))) & np.uint64(0x100F00F00F00F00F)
    v = (v | (v >> np.uint64(8))) & np.uint64(0x1F0000FF0000FF)
    v = (v | (v >> np.uint64(16))) & np.uint64(0x1F00000000FFFF)
    v = (v | (v >> np.uint64(32))) & np.uint64(0x1FFFFF)
    return v.astype(np.int64)


def morton_encode(coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords).reshape(-1, 3)
    return ((_spread3(coords[:, 0]) << np.uint64(2)) | (_spread3(coords[:, 1]) << np.uint64(1))
            | _spread3(coords[:, 2]))


def morton_decode(codes: np.ndarray) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.uint64)
    return np.stack([_compact3(codes >> np.uint64(2)), _compact3(codes >> np.uint64(1)),
                     _compact3(codes)], axis=1)


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    depth: int
    origin: np.ndarray
    cube_size: float
    coords: np.ndarray  # (m, 3) int64, unique, Morton sorted

    @property
    def codes(self) -> np.ndarray:
        return morton_encode(self.coords)

    @property
    def voxel_size(self) -> float:
        return self.cube_size / (1 << self.depth)

    @property
    def positions(self) -> np.ndarray:
        return self.origin + (self.coords + 0.5) * self.voxel_size

    def __len__(self) -> int:
        return self.coords.shape[0]


def bounding_cube(positions: np.ndarray, depth: int) -> tuple[np.ndarray, float]:
    lo = positions.min(axis=0)
    hi = positions.max(axis=0)
    extent = float((hi - lo).max())
    if extent == 0.0:
        # all points coincide: one voxel centred on them
        cube = max(1.0, float(np.abs(lo).max())) * 1e-6 * (1 << depth)
        return lo - 0.5 * cube / (1 << depth), cube
    margin = 1e-6 * extent
    return lo - margin, extent + 2 * margin


def voxelize(positions: np.ndarray, depth: int = DEFAULT_DEPTH) -> tuple[VoxelGrid, np.ndarray]:
    """Quantise positions to a 2^depth grid.

    Returns the grid and, for every input point, the index of its voxel.
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if not 1 <= depth <= MAX_DEPTH:
        raise ValueError(f"octree depth must lie in [1, {MAX_DEPTH}]")
    if len(positions) == 0:
        raise ValueError("cannot voxelize an empty point set")
    origin, cube = bounding_cube(positions, depth)
    side = 1 << depth
    q = np.floor((positions - origin) / cube * side).astype(np.int64)
    np.clip(q, 0, side - 1, out=q)
    codes = morton_encode(q)
    uniq, inverse = np.unique(codes, return_inverse=True)
    grid = VoxelGrid(depth, origin, cube, morton_decode(uniq))
    return grid, inverse.reshape(-1)


def occupancy_symbols(codes: np.ndarray, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Breadth-first occupancy bytes and, per byte, the parent node's byte (0 at root)."""
    codes = np.asarray(codes, dtype=np.uint64)
    symbols = []
    parents = []
    prev_keys = None
    prev_syms = None
    for level in range(depth):
        keys = np.unique(codes >> np.uint64(3 * (depth - level - 1)))
        nodes = keys >> np.uint64(3)
        bits = (np.uint64(1) << (keys & np.uint64(7))).astype(np.uint8)
        starts = np.concatenate([[0], np.nonzero(nodes[1:] != nodes[:-1])[0] + 1])
        syms = np.bitwise_or.reduceat(bits, starts)
        node_keys = nodes[starts]
        if level == 0:
            par = np.zeros(1, dtype=np.uint8)
        else:
            par = prev_syms[np.searchsorted(prev_keys, node_keys >> np.uint64(3))]
        symbols.append(syms)
        parents.append(par)
        prev_keys, prev_syms = node_keys, syms
    return np.concatenate(symbols).astype(np.uint8), np.concatenate(parents).astype(np.uint8)


def codes_from_symbols(symbols: np.ndarray, depth: int) -> np.ndarray:
    """Leaf Morton codes (sorted) from a breadth-first occupancy stream."""
    symbols = np.asarray(symbols, dtype=np.uint8)
    nodes = np.zeros(1, dtype=np.uint64)
    pos = 0
    for _ in range(depth):
        syms = symbols[pos:pos + len(nodes)]
        if len(syms) != len(nodes):
            raise CorruptStreamError("occupancy stream ends before the leaf level")
        if np.any(syms == 0):
            raise CorruptStreamError("occupancy symbol 0 in stream")
        pos += len(nodes)
        mask = np.unpackbits(syms[:, None], axis=1, bitorder="little").astype(bool)
        children = (nodes[:, None] << np.uint64(3)) | np.arange(8, dtype=np.uint64)[None, :]
        nodes = children[mask]
    if pos != len(symbols):
        raise CorruptStreamError(f"{len(symbols) - pos} occupancy symbols beyond the leaf level")
    return nodes


@njit(cache=True)
def _encode_occupancy(symbols, parents, use_context, counts, out):
    st = enc_init()
    for i in range(symbols.shape[0]):
        sym = symbols[i]
        base = parents[i] * 8
        for b in range(8):
            bit = (sym >> b) & 1
            m = ((base + b) * 128 + (sym & ((1 << b) - 1))) if use_context else 0
            enc_bit(st, out, counts, m, bit)
    return enc_finish(st, out)


@njit(cache=True)
def _decode_occupancy(buf, depth, n_symbols, use_context, counts, symbols):
    """Returns symbols decoded, or -1 on truncation, -2 on a bad tree shape."""
    st = dec_init(buf)
    if st[3]:
        return -1
    level_parents = np.zeros(1, dtype=np.int64)
    pos = 0
    for _ in range(depth):
        n_nodes = level_parents.shape[0]
        if pos + n_nodes > n_symbols:
            return -2
        n_children = 0
        for j in range(n_nodes):
            base = level_parents[j] * 8
            sym = 0
            for b in range(8):
                m = ((base + b) * 128 + sym) if use_context else 0
                bit = dec_bit(st, buf, counts, m)
                if st[3]:
                    return -1
                sym |= bit << b
            if sym == 0:
                return -2
            symbols[pos + j] = sym
            for b in range(8):
                n_children += (sym >> b) & 1
        nxt = np.empty(n_children, dtype=np.int64)
        k = 0
        for j in range(n_nodes):
            sym = symbols[pos + j]
            for b in range(8):
                if (sym >> b) & 1:
                    nxt[k] = sym
                    k += 1
        pos += n_nodes
        level_parents = nxt
    if pos != n_symbols:
        return -2
    return pos


def encode_occupancy_symbols(symbols, parents, use_context: bool = True) -> bytes:
    symbols = np.ascontiguousarray(symbols, dtype=np.int64)
    parents = np.ascontiguousarray(parents, dtype=np.int64)
    counts = np.ones((N_CONTEXTS if use_context else 1, 2), dtype=np.int64)
    out = np.empty(worst_case_size(8 * len(symbols)), dtype=np.uint8)
    n = _encode_occupancy(symbols, parents, use_context, counts, out)
    return out[:n].tobytes()


def decode_occupancy_symbols(buf: bytes, depth: int, n_symbols: int,
                             use_context: bool = True) -> np.ndarray:
    counts = np.ones((N_CONTEXTS if use_context else 1, 2), dtype=np.int64)
    symbols = np.zeros(n_symbols, dtype=np.int64)
    got = _decode_occupancy(np.frombuffer(buf, dtype=np.uint8), depth, n_symbols,
                            use_context, counts, symbols)
    if got == -1:
        raise CorruptStreamError("geometry stream truncated")
    if got < 0:
        raise CorruptStreamError("occupancy child counts inconsistent with symbol count")
    return symbols.astype(np.uint8)


def encode_occupancy(grid: VoxelGrid, use_context: bool = True) -> bytes:
    """Geometry payload: depth, origin, cube size, symbol count, range-coded occupancy."""
    symbols, parents = occupancy_symbols(grid.codes, grid.depth)
    w = ByteWriter().u8(grid.depth)
    for v in grid.origin:
        w.f64(float(v))
    w.f64(grid.cube_size).varint(len(symbols))
    w.raw(encode_occupancy_symbols(symbols, parents, use_context))
    return w.getvalue()


def decode_positions(buf: bytes, use_context: bool = True) -> VoxelGrid:
    """Inverse of :func:`encode_occupancy`; voxel coords come back in Morton order."""
    r = ByteReader(buf, "geometry section")
    depth = r.u8()
    if not 1 <= depth <= MAX_DEPTH:
        raise CorruptStreamError(f"geometry depth {depth} out of range")
    origin = np.array([r.f64(), r.f64(), r.f64()])
    cube = r.f64()
    n_symbols = r.varint()
    symbols = decode_occupancy_symbols(r.raw(r.remaining), depth, n_symbols, use_context)
    codes = codes_from_symbols(symbols, depth)
    return VoxelGrid(depth, origin, cube, morton_decode(codes))
