"""Bitstream container and the end-to-end encode / decode pipeline.

Pipeline: prune -> octree geometry -> recolour decoded voxels from the pruned
cloud -> YUV / flatten -> partition -> RAHT anchors -> LoD residuals.

Container layout::

    "HGSC" | version u8 | flags u8 | sh_degree u8 | lod_count u8
    | fractions f32 x (1 + lod_count) | max_leaf varint | k varint
    | raht axis order u8
    | geometry section | anchor section | lod sections...   (each varint length + bytes)
    | crc32 u32 (little-endian, over everything before it)

flags: bit 0 pooled (vs per-block) LoD sampling, bit 1 YUV colour transform,
bit 2 seedless FPS (start every sampling at the lowest Morton rank).
"""

from __future__ import annotations

import json
import struct
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import attributes as attr
from .bytesio import ByteReader, ByteWriter, TruncatedError
from .geometry import DEFAULT_DEPTH, VoxelGrid, decode_positions, encode_occupancy, voxelize
from .gs_core import CameraView, GaussianCloud, load_ply, save_ply
from .lod import DEFAULT_K, EPS_REL, PRESET_BITS, AnchorSet, decode_lod, encode_lod
from .partition import DEFAULT_FRACTIONS, DEFAULT_MAX_LEAF, Partition, build_partition
from .pruner import DEFAULT_BETA, importance, prune
from .raht import NEAR_LOSSLESS_STEPS, decode_anchors, encode_anchors

MAGIC = b"HGSC"
VERSION = 1
FLAG_POOLED = 1
FLAG_YUV = 2
FLAG_SEEDLESS = 4
KNOWN_FLAGS = FLAG_POOLED | FLAG_YUV | FLAG_SEEDLESS
AXIS_ORDER_ZYX = 0
TAU_BY_SCENE = {"small": 60.0, "big": 66.0}


class ContainerError(ValueError):
    pass


@dataclass
class EncoderConfig:
    tau: float = TAU_BY_SCENE["small"]
    beta: float = DEFAULT_BETA
    depth: int = DEFAULT_DEPTH
    anchor_frac: float = DEFAULT_FRACTIONS[0]
    lod_fracs: tuple = DEFAULT_FRACTIONS[1:]
    k: int = DEFAULT_K
    bits: dict = field(default_factory=lambda: dict(PRESET_BITS["high"]))
    anchor_steps: dict = field(default_factory=lambda: dict(NEAR_LOSSLESS_STEPS))
    max_leaf: int = DEFAULT_MAX_LEAF
    prune: bool = True
    prune_opacity_only: bool = False
    yuv: bool = True
    pooled_lods: bool = True
    seedless: bool = False

    @property
    def flags(self) -> int:
        return ((FLAG_POOLED if self.pooled_lods else 0) | (FLAG_YUV if self.yuv else 0)
                | (FLAG_SEEDLESS if self.seedless else 0))

    @classmethod
    def preset(cls, name: str, **overrides) -> "EncoderConfig":
        return cls(bits=dict(PRESET_BITS[name]), **overrides)


@dataclass
class Header:
    flags: int
    sh_degree: int
    fractions: tuple
    max_leaf: int
    k: int
    axis_order: int = AXIS_ORDER_ZYX

    @property
    def yuv(self) -> bool:
        return bool(self.flags & FLAG_YUV)

    @property
    def pooled(self) -> bool:
        return bool(self.flags & FLAG_POOLED)

    @property
    def seedless(self) -> bool:
        return bool(self.flags & FLAG_SEEDLESS)

    @property
    def lod_count(self) -> int:
        return len(self.fractions) - 1

    def write(self, w: ByteWriter) -> None:
        w.raw(MAGIC).u8(VERSION).u8(self.flags).u8(self.sh_degree).u8(self.lod_count)
        for f in self.fractions:
            w.f32(f)
        w.varint(self.max_leaf).varint(self.k).u8(self.axis_order)

    @classmethod
    def read(cls, r: ByteReader) -> "Header":
        if r.raw(4) != MAGIC:
            raise ContainerError("not an HGSC stream (bad magic at offset 0)")
        version = r.u8()
        if version != VERSION:
            raise ContainerError(f"unsupported HGSC version {version} at offset 4")
        flags = r.u8()
        if flags & ~KNOWN_FLAGS:
            raise ContainerError(f"unknown flag bits 0x{flags & ~KNOWN_FLAGS:02x} at offset 5")
        sh_degree = r.u8()
        if sh_degree > 3:
            raise ContainerError(f"invalid SH degree {sh_degree} at offset 6")
        lod_count = r.u8()
        fractions = tuple(r.f32() for _ in range(lod_count + 1))
        max_leaf = r.varint()
        k = r.varint()
        axis_order = r.u8()
        if axis_order != AXIS_ORDER_ZYX or k < 1 or max_leaf < 1:
            raise ContainerError("invalid header parameters")
        return cls(flags, sh_degree, fractions, max_leaf, k, axis_order)


def stored_fractions(anchor_frac: float, lod_fracs) -> tuple:
    return tuple(float(np.float32(f)) for f in (anchor_frac, *lod_fracs))


def partition_for(grid: VoxelGrid, header: Header) -> Partition:
    fr = header.fractions
    return build_partition(grid.coords.astype(np.float64), fr[0], fr[1:], header.max_leaf,
                           pooled_lods=header.pooled, tol=1e-6, seedless=header.seedless)


@dataclass
class EncodeResult:
    bitstream: bytes
    stats: dict
    grid: VoxelGrid
    partition: Partition
    attrs: np.ndarray          # preprocessed attributes, Morton order
    recon: np.ndarray          # encoder-side reconstruction (decoder-identical)
    pruned: GaussianCloud


@dataclass
class DecodeResult:
    cloud: GaussianCloud
    attrs: np.ndarray
    grid: VoxelGrid
    partition: Partition
    header: Header
    lod_recons: list


def encode(cloud: GaussianCloud, cams: list[CameraView] | None, config: EncoderConfig) -> EncodeResult:
    """Run the full pipeline on ``cloud``."""
    if len(cloud) == 0:
        raise ValueError("cannot encode an empty cloud")
    timings = {}
    t0 = time.perf_counter()

    stage = "pruning"
    try:
        if config.prune and (config.tau > 0 or config.prune_opacity_only):
            if not config.prune_opacity_only and not cams:
                raise ValueError("pruning needs a camera rig (or disable pruning)")
            report = importance(cloud, cams or [], config.beta, config.prune_opacity_only)
            pruned = prune(cloud, report, config.tau)
        else:
            pruned = cloud
        timings["prune"] = time.perf_counter() - t0

        stage = "geometry"
        t = time.perf_counter()
        grid, _ = voxelize(pruned.positions, config.depth)
        geometry = encode_occupancy(grid)
        timings["geometry"] = time.perf_counter() - t

        stage = "attribute preprocessing"
        t = time.perf_counter()
        recolored = attr.recolor(grid.positions, pruned)
        attrs = attr.to_attributes(recolored, config.yuv)
        groups = attr.channel_groups(cloud.n_bases, config.yuv)
        header = Header(config.flags, cloud.sh_degree, stored_fractions(config.anchor_frac, config.lod_fracs),
                        config.max_leaf, config.k)
        timings["preprocess"] = time.perf_counter() - t

        stage = "partition"
        t = time.perf_counter()
        part = partition_for(grid, header)
        timings["partition"] = time.perf_counter() - t

        stage = "anchor coding"
        t = time.perf_counter()
        coords = grid.coords.astype(np.float64)
        a_idx = part.anchor_indices
        anchor_payload, anchor_recon = encode_anchors(grid.coords[a_idx], attrs[a_idx], groups,
                                                      config.anchor_steps)
        timings["anchors"] = time.perf_counter() - t

        stage = "lod coding"
        t = time.perf_counter()
        eps = EPS_REL * (1 << grid.depth)
        recon = np.zeros_like(attrs)
        recon[a_idx] = anchor_recon
        anchors = AnchorSet(a_idx, coords[a_idx], anchor_recon)
        lod_payloads = []
        for members in part.lod_indices:
            payload, lod_recon = encode_lod(coords[members], attrs[members], anchors, groups,
                                            config.bits, header.k, eps)
            lod_payloads.append(payload)
            recon[members] = lod_recon
            anchors = anchors.merged(members, coords[members], lod_recon)
        timings["lods"] = time.perf_counter() - t
    except Exception as exc:
        raise type(exc)(f"{stage}: {exc}") from exc

    w = ByteWriter()
    header.write(w)
    header_bytes = len(w.buf)
    w.section(geometry).section(anchor_payload)
    for p in lod_payloads:
        w.section(p)
    body = w.getvalue()
    stream = body + struct.pack("<I", zlib.crc32(body))
    timings["total"] = time.perf_counter() - t0

    stats = {
        "input_primitives": len(cloud),
        "pruned_primitives": len(pruned),
        "voxels": len(grid),
        "merged_by_voxelization": len(pruned) - len(grid),
        "anchors": int(len(part.anchor_indices)),
        "lod_sizes": [int(len(m)) for m in part.lod_indices],
        "bytes": {"header": header_bytes, "geometry": len(geometry), "anchors": len(anchor_payload),
                  "lods": [len(p) for p in lod_payloads], "total": len(stream)},
        "seconds": timings,
    }
    return EncodeResult(stream, stats, grid, part, attrs, recon, pruned)


def _split(stream: bytes) -> tuple[Header, bytes, bytes, list[bytes]]:
    r = ByteReader(stream, "header")
    try:
        header = Header.read(r)
    except TruncatedError as exc:
        raise ContainerError(f"stream truncated inside the header: {exc}") from exc
    names = ["geometry", "anchor"] + [f"lod[{i}]" for i in range(header.lod_count)]
    sections = []
    for name in names:
        start = r.pos
        try:
            sections.append(r.section())
        except TruncatedError as exc:
            raise ContainerError(f"stream truncated in the {name} section (starts at byte {start})") from exc
    if r.remaining < 4:
        raise ContainerError(f"stream truncated in the checksum trailer (byte {r.pos})")
    if r.remaining > 4:
        raise ContainerError(f"{r.remaining - 4} trailing bytes after the lod sections")
    body_len = r.pos
    (crc,) = struct.unpack("<I", r.raw(4))
    if crc != zlib.crc32(stream[:body_len]):
        raise ContainerError("checksum mismatch: stream corrupted")
    return header, sections[0], sections[1], sections[2:]


def read_header(stream: bytes) -> Header:
    return Header.read(ByteReader(stream, "header"))


def decode(stream: bytes) -> DecodeResult:
    header, geometry, anchor_payload, lod_payloads = _split(stream)
    try:
        grid = decode_positions(geometry)
    except (ValueError, TruncatedError) as exc:
        raise ContainerError(f"geometry section: {exc}") from exc
    n_bases = (header.sh_degree + 1) ** 2
    groups = attr.channel_groups(n_bases, header.yuv)
    part = partition_for(grid, header)
    coords = grid.coords.astype(np.float64)
    a_idx = part.anchor_indices
    try:
        anchor_recon = decode_anchors(anchor_payload, grid.coords[a_idx], groups)
    except (ValueError, TruncatedError) as exc:
        raise ContainerError(f"anchor section: {exc}") from exc
    attrs = np.zeros((len(grid), attr.n_channels(n_bases)))
    attrs[a_idx] = anchor_recon
    anchors = AnchorSet(a_idx, coords[a_idx], anchor_recon)
    eps = EPS_REL * (1 << grid.depth)
    lod_recons = []
    for i, (members, payload) in enumerate(zip(part.lod_indices, lod_payloads)):
        try:
            rec = decode_lod(payload, coords[members], anchors, groups, header.k, eps,
                             what=f"lod[{i}] section")
        except (ValueError, TruncatedError) as exc:
            raise ContainerError(f"lod[{i}] section: {exc}") from exc
        attrs[members] = rec
        lod_recons.append(rec)
        anchors = anchors.merged(members, coords[members], rec)
    cloud = attr.from_attributes(attrs, grid.positions, n_bases, header.yuv)
    return DecodeResult(cloud, attrs, grid, part, header, lod_recons)


# -- files ---------------------------------------------------------------------

def encode_file(input_ply, output, cams: list[CameraView] | None, config: EncoderConfig,
                stats_path=None) -> EncodeResult:
    cloud = load_ply(input_ply)
    result = encode(cloud, cams, config)
    with open(output, "wb") as fh:
        fh.write(result.bitstream)
    if stats_path is not None:
        with open(stats_path, "w") as fh:
            json.dump(result.stats, fh, indent=1)
    return result


def decode_file(bitstream_path, output_ply) -> GaussianCloud:
    """Decode a bitstream and write the primitives (Morton order) as a 3DGS PLY."""
    with open(bitstream_path, "rb") as fh:
        stream = fh.read()
    cloud = decode(stream).cloud
    save_ply(cloud, output_ply)
    return cloud
