"""Importance scoring (global x local significance) and lowest-tau pruning."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .gs_core import CameraView, GaussianCloud
from .renderer import render

DEFAULT_BETA = 0.1


class ScoringError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ImportanceReport:
    global_scores: np.ndarray
    local_scores: np.ndarray
    combined: np.ndarray
    beta: float
    v_max90: float

    def __len__(self) -> int:
        return len(self.combined)


def global_significance(cloud: GaussianCloud, cams: list[CameraView]) -> np.ndarray:
    """Accumulated blending weight of every Gaussian over all pixels of all views."""
    if not cams:
        raise ValueError("global significance needs at least one camera")
    scores = np.zeros(len(cloud))
    for cam in cams:
        scores += render(cloud, cam, capture_weights=True).weights
    return scores


def volumes(cloud: GaussianCloud) -> np.ndarray:
    return np.exp(cloud.log_scales).prod(axis=1)


def local_significance(cloud: GaussianCloud, beta: float = DEFAULT_BETA) -> tuple[np.ndarray, float]:
    """Clipped volume ratio to the 90th-percentile volume, raised to ``beta``.

    Returns the scores and the percentile volume used.
    """
    if len(cloud) == 0:
        raise ValueError("empty cloud")
    if beta <= 0:
        raise ValueError("beta must be positive")
    v = volumes(cloud)
    v90 = float(np.percentile(v, 90))
    if v90 <= 0:
        raise ScoringError("90th-percentile Gaussian volume is zero")
    return np.clip(v / v90, 0.0, 1.0) ** beta, v90


def importance(cloud: GaussianCloud, cams: list[CameraView], beta: float = DEFAULT_BETA,
               opacity_only: bool = False) -> ImportanceReport:
    """Full importance report.

    ``opacity_only`` is the opacity-pruning comparison mode: the global term is
    replaced by base opacity and the local term is disabled (held at 1).
    """
    if opacity_only:
        g = cloud.opacities
        return ImportanceReport(g, np.ones(len(cloud)), g.copy(), beta, float("nan"))
    g = global_significance(cloud, cams)
    loc, v90 = local_significance(cloud, beta)
    return ImportanceReport(g, loc, g * loc, beta, v90)


def prune_count(n: int, tau_percent: float) -> int:
    return math.floor(Fraction(repr(float(tau_percent))) * n / 100)


def pruned_indices(report: ImportanceReport, tau_percent: float) -> np.ndarray:
    """Sorted indices of the survivors."""
    if not 0 <= tau_percent < 100:
        raise ValueError("tau must lie in [0, 100)")
    n = len(report)
    k = prune_count(n, tau_percent)
    order = np.argsort(report.combined, kind="stable")
    return np.sort(order[k:])


def prune(cloud: GaussianCloud, report: ImportanceReport, tau_percent: float) -> GaussianCloud:
    """Drop the floor(tau/100 * n) lowest-scoring Gaussians; ties prune lower indices first."""
    if len(report) != len(cloud):
        raise ValueError(f"report covers {len(report)} Gaussians, cloud has {len(cloud)}")
    return cloud.subset(pruned_indices(report, tau_percent))


def importance_cdf(report: ImportanceReport, use_global: bool = False) -> np.ndarray:
    """Cumulative importance of the weakest fraction of Gaussians, in 1% steps.

    Returns a (101, 2) array of (gaussian_fraction, importance_fraction).
    """
    scores = report.global_scores if use_global else report.combined
    if not np.all(np.isfinite(scores)):
        raise ValueError("non-finite importance scores")
    s = np.sort(scores)
    prefix = np.concatenate([[0.0], np.cumsum(s)])
    total = prefix[-1]
    if total <= 0:
        raise ScoringError("total importance is zero; the curve is undefined")
    n = len(s)
    steps = np.arange(101)
    counts = (steps * n) // 100
    return np.stack([steps / 100.0, prefix[counts] / total], axis=1)


def write_cdf_csv(curve: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        fh.write("gaussian_fraction,importance_fraction\n")
        for x, y in curve:
            fh.write(f"{x:.2f},{y:.9g}\n")
