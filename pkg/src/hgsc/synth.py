"""Synthetic scenes: Gaussians laid on analytic surfaces with smooth SH colour fields.

The scene is a unit sphere, a torus around it and a ground patch below, plus a
sprinkle of small faint "floaters" standing in for the low-importance
primitives a trained scene accumulates. Camera rigs orbit the origin.
"""

from __future__ import annotations

import numpy as np

from .gs_core import SH_BASES, CameraView, GaussianCloud, look_at
from .renderer import SH_C0

FLOATER_FRACTION = 0.15
TORUS_R, TORUS_r = 1.6, 0.3
PLANE_Z, PLANE_HALF = -1.3, 2.0


def _sphere(u, v):
    theta = np.arccos(1 - 2 * u)
    phi = 2 * np.pi * v
    n = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], -1)
    return n.copy(), n


def _torus(u, v):
    a = 2 * np.pi * u
    b = 2 * np.pi * v
    ring = np.stack([np.cos(a), np.sin(a), np.zeros_like(a)], -1)
    n = np.cos(b)[:, None] * ring + np.sin(b)[:, None] * np.array([0.0, 0.0, 1.0])
    return TORUS_R * ring + TORUS_r * n, n


def _plane(u, v):
    p = np.stack([(2 * u - 1) * PLANE_HALF, (2 * v - 1) * PLANE_HALF, np.full_like(u, PLANE_Z)], -1)
    return p, np.tile([0.0, 0.0, 1.0], (len(u), 1))


SURFACES = [(_sphere, 4 * np.pi), (_torus, 4 * np.pi ** 2 * TORUS_R * TORUS_r),
            (_plane, (2 * PLANE_HALF) ** 2)]


def _frame_quaternions(normals: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Quaternions (w, x, y, z) of frames whose local z axis is the normal, random twist."""
    n = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    helper = np.where(np.abs(n[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    t = np.cross(helper, n)
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    b = np.cross(n, t)
    ang = rng.uniform(0, 2 * np.pi, len(n))[:, None]
    t, b = np.cos(ang) * t + np.sin(ang) * b, -np.sin(ang) * t + np.cos(ang) * b
    R = np.stack([t, b, n], axis=-1)  # columns are the local axes
    w = np.sqrt(np.maximum(1 + R[:, 0, 0] + R[:, 1, 1] + R[:, 2, 2], 1e-12)) / 2
    q = np.stack([w, (R[:, 2, 1] - R[:, 1, 2]) / (4 * w), (R[:, 0, 2] - R[:, 2, 0]) / (4 * w),
                  (R[:, 1, 0] - R[:, 0, 1]) / (4 * w)], -1)
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def _color_field(p: np.ndarray) -> np.ndarray:
    """Smooth RGB in [0.1, 0.9]."""
    r = 0.5 + 0.35 * np.sin(1.7 * p[:, 0] + 0.4) * np.cos(1.3 * p[:, 1])
    g = 0.5 + 0.35 * np.sin(1.1 * p[:, 1] + 2.0 * p[:, 2] + 1.0)
    b = 0.5 + 0.35 * np.cos(0.9 * p[:, 0] - 1.4 * p[:, 2])
    return np.stack([r, g, b], -1)


def synth_scene(n: int = 50_000, sh_degree: int = 3, seed: int = 0) -> GaussianCloud:
    """``n`` Gaussians; surface splats are flat discs oriented along the surface normal."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    n_float = int(round(FLOATER_FRACTION * n)) if n >= 10 else 0
    n_surf = n - n_float
    areas = np.array([a for _, a in SURFACES])
    counts = np.floor(areas / areas.sum() * n_surf).astype(int)
    counts[0] += n_surf - counts.sum()
    pos, nrm = [], []
    for (fn, _), c in zip(SURFACES, counts):
        p, nn = fn(rng.random(c), rng.random(c))
        pos.append(p)
        nrm.append(nn)
    pos = np.concatenate(pos)
    nrm = np.concatenate(nrm)
    spacing = np.sqrt(areas.sum() / max(n_surf, 1))
    tangential = spacing * rng.uniform(0.6, 1.0, (n_surf, 1)) * np.ones((1, 2))
    scales = np.concatenate([tangential, 0.1 * tangential[:, :1]], axis=1)
    rots = _frame_quaternions(nrm, rng)
    opac = rng.uniform(1.0, 4.0, n_surf)

    fpos = rng.uniform(-2.0, 2.0, (n_float, 3)) * [1, 1, 0.6]
    fscale = np.full((n_float, 3), 0.3 * spacing) * rng.uniform(0.5, 1.0, (n_float, 3))
    frot = rng.normal(size=(n_float, 4))
    frot /= np.linalg.norm(frot, axis=1, keepdims=True)
    fopac = rng.uniform(-5.0, -2.5, n_float)

    positions = np.concatenate([pos, fpos])
    B = SH_BASES[sh_degree]
    sh = np.zeros((n, B, 3))
    sh[:, 0] = (_color_field(positions) - 0.5) / SH_C0
    if B > 1:
        # weak view dependence varying smoothly over space
        phase = positions @ np.array([0.7, -0.5, 0.9])
        ks = np.arange(1, B)[None, :, None]
        sh[:, 1:] = 0.08 / ks * np.sin(phase[:, None, None] * ks * 0.5 + np.arange(3)[None, None, :])
    order = rng.permutation(n)  # no spatial ordering in the file, like a trained scene
    return GaussianCloud.from_arrays(positions[order],
                                     np.log(np.concatenate([scales, fscale]))[order],
                                     np.concatenate([rots, frot])[order],
                                     np.concatenate([opac, fopac])[order], sh[order])


def orbit_rig(n_views: int, radius: float = 4.5, size: int = 256, focal: float = 300.0,
              azimuth_offset: float = 0.0, elevations=(15.0, 40.0)) -> list[CameraView]:
    """Cameras on rings around the origin, alternating between the given elevations."""
    cams = []
    for i in range(n_views):
        az = np.deg2rad(azimuth_offset + 360.0 * i / n_views)
        el = np.deg2rad(elevations[i % len(elevations)])
        eye = radius * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
        cams.append(CameraView(size, size, focal, focal, size / 2, size / 2,
                               look_at(eye, (0.0, 0.0, -0.2))))
    return cams


def training_rig(n_views: int = 24, size: int = 256) -> list[CameraView]:
    return orbit_rig(n_views, size=size)


def heldout_rig(n_views: int = 8, size: int = 256) -> list[CameraView]:
    """Views between the training azimuths at a different elevation."""
    return orbit_rig(n_views, size=size, azimuth_offset=360.0 / 48, elevations=(27.0,))
