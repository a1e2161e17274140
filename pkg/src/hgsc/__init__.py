"""Hierarchical compression codec for 3D Gaussian Splatting scenes."""

from .gs_core import CameraView, GaussianCloud, load_cameras, load_ply, save_cameras, save_ply

__version__ = "0.1.0"

__all__ = ["CameraView", "GaussianCloud", "load_cameras", "load_ply", "save_cameras", "save_ply",
           "__version__"]
