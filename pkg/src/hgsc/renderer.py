"""Deterministic CPU splat renderer with front-to-back alpha blending.

Splats are EWA-projected, globally depth sorted (ties by primitive index) and
composited splat-major into a per-pixel transmittance buffer, which gives the
same result as per-pixel front-to-back blending over the sorted list.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .gs_core import CameraView, GaussianCloud, GaussianPrimitive, covariances, sigmoid

NEAR = 0.1
DILATION = 0.3
ALPHA_MAX = 0.99
T_MIN = 1e-4
CUTOFF_SIGMA = 3.0
DET_EPS = 1e-12

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
         -1.0925484305920792, 0.5462742152960396)
SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
         -0.4570457994644658, 1.445305721320277, -0.5900435899266435)


def sh_basis(dirs: np.ndarray, n_bases: int) -> np.ndarray:
    """Real SH basis values (3DGS sign convention) for unit directions, shape (n, B)."""
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    out = np.empty((len(dirs), n_bases))
    out[:, 0] = SH_C0
    if n_bases > 1:
        out[:, 1] = -SH_C1 * y
        out[:, 2] = SH_C1 * z
        out[:, 3] = -SH_C1 * x
    if n_bases > 4:
        xx, yy, zz = x * x, y * y, z * z
        out[:, 4] = SH_C2[0] * x * y
        out[:, 5] = SH_C2[1] * y * z
        out[:, 6] = SH_C2[2] * (2 * zz - xx - yy)
        out[:, 7] = SH_C2[3] * x * z
        out[:, 8] = SH_C2[4] * (xx - yy)
    if n_bases > 9:
        out[:, 9] = SH_C3[0] * y * (3 * xx - yy)
        out[:, 10] = SH_C3[1] * x * y * z
        out[:, 11] = SH_C3[2] * y * (4 * zz - xx - yy)
        out[:, 12] = SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy)
        out[:, 13] = SH_C3[4] * x * (4 * zz - xx - yy)
        out[:, 14] = SH_C3[5] * z * (xx - yy)
        out[:, 15] = SH_C3[6] * x * (xx - 3 * yy)
    return out


def eval_sh(sh: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """RGB from SH coefficients (n, B, 3) toward unit directions, clamped to [0, 1]."""
    basis = sh_basis(dirs, sh.shape[1])
    rgb = np.einsum("nb,nbc->nc", basis, sh) + 0.5
    return np.clip(rgb, 0.0, 1.0)


@dataclass(frozen=True)
class ProjectedGaussian:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    color: np.ndarray
    base_opacity: float
    source_index: int


@dataclass
class RenderOutput:
    image: np.ndarray                     # (H, W, 3)
    weights: np.ndarray | None = None     # (n,)
    transmittance: np.ndarray | None = None
    skipped: int = 0                      # splats dropped for a singular cov2d


@dataclass
class _Projection:
    index: np.ndarray
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: np.ndarray
    color: np.ndarray
    opacity: np.ndarray
    skipped: int


def _project_arrays(positions, log_scales, rotations, opacity_logits, sh, cam: CameraView):
    W = cam.rotation
    t = positions @ W.T + cam.translation
    z = t[:, 2]
    front = z > NEAR
    idx = np.nonzero(front)[0]
    t = t[idx]
    z = z[idx]
    sigma = covariances(log_scales[idx], rotations[idx])
    J = np.zeros((len(idx), 2, 3))
    J[:, 0, 0] = cam.fx / z
    J[:, 0, 2] = -cam.fx * t[:, 0] / (z * z)
    J[:, 1, 1] = cam.fy / z
    J[:, 1, 2] = -cam.fy * t[:, 1] / (z * z)
    T = J @ W
    cov2d = T @ sigma @ np.swapaxes(T, 1, 2)
    cov2d[:, 0, 0] += DILATION
    cov2d[:, 1, 1] += DILATION
    cov2d[:, 0, 1] = cov2d[:, 1, 0] = 0.5 * (cov2d[:, 0, 1] + cov2d[:, 1, 0])
    mean2d = np.stack([cam.fx * t[:, 0] / z + cam.cx, cam.fy * t[:, 1] / z + cam.cy], axis=1)

    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * c - b * b
    singular = det <= DET_EPS
    mid = 0.5 * (a + c)
    lam = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radius = CUTOFF_SIGMA * np.sqrt(np.maximum(lam, 0.0))
    onscreen = ((mean2d[:, 0] + radius >= 0) & (mean2d[:, 0] - radius <= cam.width - 1)
                & (mean2d[:, 1] + radius >= 0) & (mean2d[:, 1] - radius <= cam.height - 1))
    keep = onscreen & ~singular
    skipped = int(np.count_nonzero(onscreen & singular))
    idx, mean2d, cov2d, z = idx[keep], mean2d[keep], cov2d[keep], z[keep]

    dirs = positions[idx] - cam.center
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-30)
    color = eval_sh(sh[idx], dirs)
    return _Projection(idx, mean2d, cov2d, z, color, sigmoid(opacity_logits[idx]), skipped)


def project(p: GaussianPrimitive, cam: CameraView) -> ProjectedGaussian | None:
    """Project one primitive; ``None`` means culled (near plane, off-screen, singular)."""
    proj = _project_arrays(np.asarray(p.position, float)[None], np.asarray(p.log_scale, float)[None],
                           np.asarray(p.rotation, float)[None], np.array([p.opacity_logit], float),
                           np.asarray(p.sh, float)[None], cam)
    if len(proj.index) == 0:
        return None
    return ProjectedGaussian(proj.mean2d[0], proj.cov2d[0], float(proj.depth[0]),
                             proj.color[0], float(proj.opacity[0]), 0)


@njit(cache=True)
def _rasterize(order, mean2d, cov2d, color, opacity, src, width, height, image,
               trans, weights):
    for o in range(order.shape[0]):
        s = order[o]
        a = cov2d[s, 0, 0]
        b = cov2d[s, 0, 1]
        c = cov2d[s, 1, 1]
        det = a * c - b * b
        ia = c / det
        ib = -b / det
        ic = a / det
        mid = 0.5 * (a + c)
        lam = mid + np.sqrt(max(mid * mid - det, 0.0))
        r = CUTOFF_SIGMA * np.sqrt(lam)
        mx = mean2d[s, 0]
        my = mean2d[s, 1]
        x0 = max(0, int(np.ceil(mx - r)))
        x1 = min(width - 1, int(np.floor(mx + r)))
        y0 = max(0, int(np.ceil(my - r)))
        y1 = min(height - 1, int(np.floor(my + r)))
        acc = 0.0
        for py in range(y0, y1 + 1):
            dy = py - my
            for px in range(x0, x1 + 1):
                T = trans[py, px]
                if T < T_MIN:
                    continue
                dx = px - mx
                m = ia * dx * dx + 2.0 * ib * dx * dy + ic * dy * dy
                if m > CUTOFF_SIGMA * CUTOFF_SIGMA:
                    continue
                alpha = min(ALPHA_MAX, opacity[s] * np.exp(-0.5 * m))
                w = alpha * T
                image[py, px, 0] += color[s, 0] * w
                image[py, px, 1] += color[s, 1] * w
                image[py, px, 2] += color[s, 2] * w
                trans[py, px] = T * (1.0 - alpha)
                acc += w
        weights[src[s]] += acc


def render(cloud: GaussianCloud, cam: CameraView, capture_weights: bool = False) -> RenderOutput:
    """Render ``cloud`` from ``cam`` on a black background."""
    image = np.zeros((cam.height, cam.width, 3))
    trans = np.ones((cam.height, cam.width))
    weights = np.zeros(len(cloud))
    if len(cloud) == 0:
        return RenderOutput(image, weights if capture_weights else None, trans, 0)
    proj = _project_arrays(cloud.positions, cloud.log_scales, cloud.rotations,
                           cloud.opacity_logits, cloud.sh, cam)
    order = np.lexsort((proj.index, proj.depth))
    _rasterize(order, proj.mean2d, proj.cov2d, proj.color, proj.opacity, proj.index,
               cam.width, cam.height, image, trans, weights)
    return RenderOutput(image, weights if capture_weights else None, trans, proj.skipped)


def save_png(image: np.ndarray, path) -> None:
    from PIL import Image

    Image.fromarray(np.round(np.clip(image, 0, 1) * 255).astype(np.uint8)).save(path)
