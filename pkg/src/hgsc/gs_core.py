"""Gaussian scene types, 3DGS PLY import/export and camera rigs."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from plyfile import PlyData, PlyElement

SH_BASES = {0: 1, 1: 4, 2: 9, 3: 16}
NORM_TOL = 1e-6


class PlyFormatError(ValueError):
    pass


class PlyDataError(ValueError):
    pass


def sh_degree_for_bases(n_bases: int) -> int:
    for degree, bases in SH_BASES.items():
        if bases == n_bases:
            return degree
    raise ValueError(f"{n_bases} SH bases do not form a complete degree 0-3 set")


def canonicalize_quaternions(q: np.ndarray) -> np.ndarray:
    """Unit norm, ``w >= 0`` (ties: first nonzero component positive).

    Rows already unit-norm within 1e-6 are not rescaled, so canonical input is
    returned bit-for-bit.
    """
    q = np.array(q, dtype=np.float64, copy=True).reshape(-1, 4)
    norms = np.linalg.norm(q, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero-norm quaternion")
    off = np.abs(norms - 1.0) > NORM_TOL
    q[off] /= norms[off, None]
    nz = q != 0
    first = np.argmax(nz, axis=1)
    sign = np.sign(q[np.arange(len(q)), first])
    q *= sign[:, None]
    return q


def quaternion_to_rotation(q: np.ndarray) -> np.ndarray:
    """(n,4) wxyz quaternions to (n,3,3) rotation matrices (normalised first)."""
    q = np.asarray(q, dtype=np.float64).reshape(-1, 4)
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    R = np.empty((len(q), 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


@dataclass(frozen=True)
class GaussianPrimitive:
    position: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray
    opacity_logit: float
    sh: np.ndarray  # (B, 3)


@dataclass(frozen=True, eq=False)
class GaussianCloud:
    """Struct-of-arrays Gaussian scene; row ``i`` of every array is primitive ``i``."""

    positions: np.ndarray       # (n, 3)
    log_scales: np.ndarray      # (n, 3)
    rotations: np.ndarray       # (n, 4) wxyz
    opacity_logits: np.ndarray  # (n,)
    sh: np.ndarray              # (n, B, 3)

    def __post_init__(self):
        n = self.positions.shape[0]
        for name, shape in (("positions", (n, 3)), ("log_scales", (n, 3)),
                            ("rotations", (n, 4)), ("opacity_logits", (n,))):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.sh.ndim != 3 or self.sh.shape[0] != n or self.sh.shape[2] != 3:
            raise ValueError(f"sh has shape {self.sh.shape}, expected (n, B, 3)")
        sh_degree_for_bases(self.sh.shape[1])
        for name in ("positions", "log_scales", "rotations", "opacity_logits", "sh"):
            getattr(self, name).setflags(write=False)

    @classmethod
    def from_arrays(cls, positions, log_scales, rotations, opacity_logits, sh) -> "GaussianCloud":
        return cls(np.array(positions, dtype=np.float64).reshape(-1, 3),
                   np.array(log_scales, dtype=np.float64).reshape(-1, 3),
                   np.array(rotations, dtype=np.float64).reshape(-1, 4),
                   np.array(opacity_logits, dtype=np.float64).reshape(-1),
                   np.array(sh, dtype=np.float64))

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def n_bases(self) -> int:
        return self.sh.shape[1]

    @property
    def sh_degree(self) -> int:
        return sh_degree_for_bases(self.n_bases)

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.positions.min(axis=0), self.positions.max(axis=0)

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    def primitive(self, i: int) -> GaussianPrimitive:
        return GaussianPrimitive(self.positions[i], self.log_scales[i], self.rotations[i],
                                 float(self.opacity_logits[i]), self.sh[i])

    def subset(self, index) -> "GaussianCloud":
        index = np.asarray(index)
        return GaussianCloud.from_arrays(self.positions[index], self.log_scales[index],
                                         self.rotations[index], self.opacity_logits[index],
                                         self.sh[index])

    def with_canonical_rotations(self) -> "GaussianCloud":
        return GaussianCloud.from_arrays(self.positions, self.log_scales,
                                         canonicalize_quaternions(self.rotations),
                                         self.opacity_logits, self.sh)

    def equals(self, other: "GaussianCloud") -> bool:
        return all(np.array_equal(getattr(self, f), getattr(other, f))
                   for f in ("positions", "log_scales", "rotations", "opacity_logits", "sh"))


def covariance(p: GaussianPrimitive) -> np.ndarray:
    """Sigma = R S S^T R^T with S = diag(exp(log_scale))."""
    return covariances(np.asarray(p.log_scale)[None], np.asarray(p.rotation)[None])[0]


def covariances(log_scales: np.ndarray, rotations: np.ndarray) -> np.ndarray:
    R = quaternion_to_rotation(rotations)
    M = R * np.exp(log_scales)[:, None, :]
    return M @ np.swapaxes(M, 1, 2)


# -- PLY ---------------------------------------------------------------------

def _property_names(n_bases: int) -> list[str]:
    names = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"]
    names += [f"f_rest_{i}" for i in range(3 * (n_bases - 1))]
    names += ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    return names


def load_ply(path: str | os.PathLike, canonicalize: bool = True) -> GaussianCloud:
    """Read a 3DGS PLY (ascii or binary little-endian).

    With ``canonicalize`` the quaternions are sign-fixed and, if off unit norm by
    more than 1e-6, renormalised.
    """
    ply = PlyData.read(str(path))
    if "vertex" not in ply:
        raise PlyFormatError("PLY has no 'vertex' element")
    vertex = ply["vertex"].data
    present = set(vertex.dtype.names)
    n_rest = 0
    while f"f_rest_{n_rest}" in present:
        n_rest += 1
    if n_rest % 3 or (n_rest // 3 + 1) not in SH_BASES.values():
        raise PlyFormatError(f"{n_rest} f_rest properties do not match an SH degree 0-3")
    n_bases = n_rest // 3 + 1
    names = _property_names(n_bases)
    for name in names:
        if name not in present:
            raise PlyFormatError(f"missing required vertex property '{name}'")
    table = np.stack([np.asarray(vertex[name], dtype=np.float64) for name in names], axis=1)
    bad = ~np.isfinite(table)
    if bad.any():
        row = int(np.argmax(bad.any(axis=1)))
        col = names[int(np.argmax(bad[row]))]
        raise PlyDataError(f"non-finite value in property '{col}' of primitive {row}")
    n = table.shape[0]
    dc = table[:, 3:6]
    rest = table[:, 6:6 + n_rest].reshape(n, 3, n_bases - 1).transpose(0, 2, 1)
    sh = np.concatenate([dc[:, None, :], rest], axis=1)
    o = 6 + n_rest
    rotations = table[:, o + 4:o + 8]
    if canonicalize:
        rotations = canonicalize_quaternions(rotations)
    return GaussianCloud.from_arrays(table[:, :3], table[:, o + 1:o + 4], rotations, table[:, o], sh)


def save_ply(cloud: GaussianCloud, path: str | os.PathLike) -> None:
    """Write binary little-endian PLY with float32 properties."""
    n = len(cloud)
    if n == 0:
        raise ValueError("cannot save an empty cloud")
    names = _property_names(cloud.n_bases)
    rest = cloud.sh[:, 1:, :].transpose(0, 2, 1).reshape(n, -1)
    table = np.concatenate([cloud.positions, cloud.sh[:, 0, :], rest,
                            cloud.opacity_logits[:, None], cloud.log_scales, cloud.rotations],
                           axis=1)
    arr = np.empty(n, dtype=[(name, "<f4") for name in names])
    for j, name in enumerate(names):
        arr[name] = table[:, j]
    PlyData([PlyElement.describe(arr, "vertex")], byte_order="<").write(str(path))


def raw_ply_size(n: int, n_bases: int) -> int:
    """Bytes of the binary 3DGS PLY body for ``n`` primitives (header excluded)."""
    return n * 4 * len(_property_names(n_bases))


# -- cameras -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CameraView:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    world_to_camera: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        m = np.array(self.world_to_camera, dtype=np.float64).reshape(4, 4)
        object.__setattr__(self, "world_to_camera", m)
        if self.width <= 0 or self.height <= 0:
            raise ValueError("camera width and height must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("camera focal lengths must be positive")
        R = m[:3, :3]
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6, rtol=0):
            raise ValueError("world_to_camera rotation block is not orthonormal")

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "fx": self.fx, "fy": self.fy,
                "cx": self.cx, "cy": self.cy,
                "world_to_camera": [float(v) for v in self.world_to_camera.reshape(-1)]}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraView":
        w2c = d["world_to_camera"]
        if len(w2c) != 16:
            raise ValueError("world_to_camera must hold 16 numbers")
        return cls(int(d["width"]), int(d["height"]), float(d["fx"]), float(d["fy"]),
                   float(d["cx"]), float(d["cy"]), np.array(w2c, dtype=np.float64))


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-to-camera matrix for an OpenCV-style camera (+z forward, +y down)."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, (1.0, 0.0, 0.0))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])
    m = np.eye(4)
    m[:3, :3] = R
    m[:3, 3] = -R @ eye
    return m


def load_cameras(path: str | os.PathLike) -> list[CameraView]:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, list):
        raise ValueError("camera rig must be a JSON array")
    return [CameraView.from_dict(d) for d in doc]


def save_cameras(cams: list[CameraView], path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        json.dump([c.to_dict() for c in cams], fh, indent=1)
