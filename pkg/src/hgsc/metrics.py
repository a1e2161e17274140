"""Image quality and rate-distortion metrics: PSNR, SSIM, BD-rate, RD points."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.signal import convolve2d

PSNR_CAP = 99.0
MSE_FLOOR = 1e-10
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
LUMA = np.array([0.2126, 0.7152, 0.0722])


class OverlapError(ValueError):
    pass


def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("empty images")
    return a, b


def psnr(a, b) -> float:
    """PSNR in dB for images in [0, 1]; reported as 99 dB when MSE < 1e-10."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse < MSE_FLOOR:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def luma(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return img @ LUMA if img.ndim == 3 else img


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-x ** 2 / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b) -> float:
    """Mean SSIM over all full 11x11 Gaussian windows, computed on BT.709 luma."""
    a, b = _check_pair(a, b)
    x, y = luma(a), luma(b)
    if min(x.shape) < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW} pixels on each side")
    w = gaussian_window()

    def filt(img):
        return convolve2d(img, w, mode="valid")

    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    num = (2 * mx * my + SSIM_C1) * (2 * sxy + SSIM_C2)
    den = (mx * mx + my * my + SSIM_C1) * (sxx + syy + SSIM_C2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class RdPoint:
    size_bytes: int
    psnr_db: float
    ssim: float
    encode_seconds: float
    decode_seconds: float
    label: str

    def __post_init__(self):
        if self.size_bytes <= 0:
            raise ValueError("RD point size must be positive")
        if not -1.0 <= self.ssim <= 1.0:
            raise ValueError("SSIM must lie in [-1, 1]")


def write_rd_csv(points: list[RdPoint], path) -> None:
    names = [f.name for f in fields(RdPoint)]
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=names)
        wr.writeheader()
        for p in points:
            wr.writerow(asdict(p))


def read_rd_csv(path) -> list[RdPoint]:
    with open(path, newline="") as fh:
        return [RdPoint(int(r["size_bytes"]), float(r["psnr_db"]), float(r["ssim"]),
                        float(r["encode_seconds"]), float(r["decode_seconds"]), r["label"])
                for r in csv.DictReader(fh)]


def _curve(points) -> tuple[np.ndarray, np.ndarray]:
    pts = [(p.size_bytes, p.psnr_db) if isinstance(p, RdPoint) else (p[0], p[1]) for p in points]
    if len(pts) < 4:
        raise ValueError("BD-rate needs at least 4 points per curve")
    rate, q = np.array(pts, dtype=np.float64).T
    if np.any(rate <= 0):
        raise ValueError("rates must be positive")
    order = np.argsort(rate)
    rate, q = rate[order], q[order]
    if np.any(np.diff(q) < 0):
        raise ValueError("RD curve must be monotone: quality falls as rate rises")
    return np.log10(rate), q


def bd_rate(curve_a, curve_b) -> float:
    """Average rate difference of ``curve_b`` relative to ``curve_a`` in percent.

    Curves are sequences of RdPoint or (rate, psnr) pairs. Log10 rate is fitted
    as a cubic in PSNR and integrated over the shared PSNR interval.
    Negative means ``curve_b`` needs fewer bits for the same quality.
    """
    la, qa = _curve(curve_a)
    lb, qb = _curve(curve_b)
    lo = max(qa.min(), qb.min())
    hi = min(qa.max(), qb.max())
    if hi <= lo:
        raise OverlapError("RD curves have no overlapping PSNR interval")
    pa = np.polyint(np.polyfit(qa, la, 3))
    pb = np.polyint(np.polyfit(qb, lb, 3))
    avg = ((np.polyval(pb, hi) - np.polyval(pb, lo)) - (np.polyval(pa, hi) - np.polyval(pa, lo))) / (hi - lo)
    return float((10.0 ** avg - 1.0) * 100.0)
