"""Attribute pre-processing: nearest-Gaussian recolouring, RGB->YUV on SH, flattening.

Attribute rows are laid out as ``[c0, c1, c2] * B`` SH values (YUV or RGB per
basis function), then 3 log-scales, 4 quaternion components and the opacity
logit, i.e. ``3B + 8`` channels.
"""

from __future__ import annotations

import numpy as np

from .gs_core import GaussianCloud, canonicalize_quaternions
from .spatial import ExactKNN

GROUPS = ("sh_y", "sh_uv", "scale", "rotation", "opacity")

KR, KG, KB = 0.2126, 0.7152, 0.0722
RGB_TO_YUV = np.array([
    [KR, KG, KB],
    [-KR / 1.8556, -KG / 1.8556, (1 - KB) / 1.8556],
    [(1 - KR) / 1.5748, -KG / 1.5748, -KB / 1.5748],
])
YUV_TO_RGB = np.linalg.inv(RGB_TO_YUV)


def rgb_to_yuv(sh: np.ndarray) -> np.ndarray:
    """BT.709 analysis matrix applied to every trailing RGB triple."""
    return np.asarray(sh, dtype=np.float64) @ RGB_TO_YUV.T


def yuv_to_rgb(sh: np.ndarray) -> np.ndarray:
    return np.asarray(sh, dtype=np.float64) @ YUV_TO_RGB.T


def n_channels(n_bases: int) -> int:
    return 3 * n_bases + 8


def channel_groups(n_bases: int, yuv: bool = True) -> dict[str, np.ndarray]:
    """Channel indices per coding group; together they partition all channels.

    Without the colour transform every SH channel is coded in the ``sh_y`` group.
    """
    sh = np.arange(3 * n_bases)
    o = 3 * n_bases
    if yuv:
        y, uv = sh[sh % 3 == 0], sh[sh % 3 != 0]
    else:
        y, uv = sh, sh[:0]
    return {"sh_y": y, "sh_uv": uv, "scale": np.arange(o, o + 3),
            "rotation": np.arange(o + 3, o + 7), "opacity": np.array([o + 7])}


def nearest_original(query_positions: np.ndarray, cloud: GaussianCloud) -> np.ndarray:
    """Index of the Euclidean-nearest primitive of ``cloud`` for each query (ties: lowest index)."""
    if len(cloud) == 0:
        raise ValueError("cannot recolor from an empty cloud")
    idx, _ = ExactKNN(cloud.positions).query(query_positions, 1)
    return idx[:, 0]


def recolor(decoded_positions: np.ndarray, cloud: GaussianCloud) -> GaussianCloud:
    """Cloud at ``decoded_positions`` carrying the attributes of the nearest original."""
    src = nearest_original(decoded_positions, cloud)
    return GaussianCloud.from_arrays(decoded_positions, cloud.log_scales[src], cloud.rotations[src],
                                     cloud.opacity_logits[src], cloud.sh[src])


def to_attributes(cloud: GaussianCloud, yuv: bool = True) -> np.ndarray:
    """Flatten a cloud to the (n, 3B+8) coding layout, canonicalising quaternions."""
    sh = rgb_to_yuv(cloud.sh) if yuv else cloud.sh
    n = len(cloud)
    rot = canonicalize_quaternions(cloud.rotations) if n else cloud.rotations
    return np.concatenate([sh.reshape(n, -1), cloud.log_scales, rot,
                           cloud.opacity_logits[:, None]], axis=1)


def from_attributes(attrs: np.ndarray, positions: np.ndarray, n_bases: int,
                    yuv: bool = True) -> GaussianCloud:
    """Rebuild a cloud from coded attributes; quaternions are renormalised."""
    n = len(attrs)
    o = 3 * n_bases
    sh = attrs[:, :o].reshape(n, n_bases, 3)
    if yuv:
        sh = yuv_to_rgb(sh)
    rot = attrs[:, o + 3:o + 7]
    if n:
        rot = canonicalize_quaternions(rot)
    return GaussianCloud.from_arrays(positions, attrs[:, o:o + 3], rot, attrs[:, o + 7], sh)
