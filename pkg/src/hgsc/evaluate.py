"""Rendered-quality evaluation and rate-distortion sweeps."""

from __future__ import annotations

import time

import numpy as np

from .codec import EncoderConfig, decode, encode
from .gs_core import CameraView, GaussianCloud
from .metrics import RdPoint, psnr, ssim
from .renderer import render, save_png


def compare_renders(reference: GaussianCloud, test: GaussianCloud, cams: list[CameraView],
                    png_dir=None) -> dict:
    """Per-view PSNR / SSIM of ``test`` against ``reference``; means over views."""
    if not cams:
        raise ValueError("evaluation needs at least one camera")
    rows = []
    for i, cam in enumerate(cams):
        ref = render(reference, cam).image
        img = render(test, cam).image
        rows.append((psnr(ref, img), ssim(ref, img)))
        if png_dir is not None:
            save_png(ref, f"{png_dir}/view{i:03d}_reference.png")
            save_png(img, f"{png_dir}/view{i:03d}_test.png")
    p, s = np.array(rows).T
    return {"psnr_db": float(p.mean()), "ssim": float(s.mean()),
            "per_view_psnr_db": p.tolist(), "per_view_ssim": s.tolist()}


def rd_point(cloud: GaussianCloud, train_cams, eval_cams, config: EncoderConfig,
             label: str) -> RdPoint:
    """Encode, decode and score one configuration against the pruned original."""
    t = time.perf_counter()
    enc = encode(cloud, train_cams, config)
    t_enc = time.perf_counter() - t
    t = time.perf_counter()
    dec = decode(enc.bitstream)
    t_dec = time.perf_counter() - t
    q = compare_renders(enc.pruned, dec.cloud, eval_cams)
    return RdPoint(len(enc.bitstream), q["psnr_db"], q["ssim"], t_enc, t_dec, label)


def rd_sweep(cloud: GaussianCloud, train_cams, eval_cams,
             configs: dict[str, EncoderConfig]) -> list[RdPoint]:
    if len(configs) < 2:
        raise ValueError("an RD sweep needs at least two configurations")
    return [rd_point(cloud, train_cams, eval_cams, cfg, label) for label, cfg in configs.items()]
