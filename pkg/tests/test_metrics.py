import numpy as np
import pytest

from hgsc.metrics import OverlapError, RdPoint, bd_rate, psnr, read_rd_csv, ssim, write_rd_csv
from oracles import bd_rate_quadrature, ssim_direct


def test_identical_images(rng):
    a = rng.random((32, 32, 3))
    assert psnr(a, a) == 99.0
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def test_constant_offset():
    a = np.full((16, 16, 3), 0.3)
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))
    with pytest.raises(ValueError):
        ssim(np.zeros((20, 20, 3)), np.zeros((20, 21, 3)))


def test_ssim_against_direct_formula(rng):
    for _ in range(5):
        a = rng.random((20, 24, 3))
        b = np.clip(a + rng.normal(scale=rng.uniform(0.01, 0.5), size=a.shape), 0, 1)
        s = ssim(a, b)
        assert -1 <= s <= 1
        assert s == pytest.approx(ssim_direct(a, b), abs=1e-9)
        assert abs(s - ssim(b, a)) < 1e-9


def test_ssim_anticorrelated(rng):
    a = rng.random((30, 30, 3))
    s = ssim(a, 1 - a)
    assert -1 <= s < 0


CURVE = [(1000, 30.0), (1800, 33.1), (3500, 36.0), (7000, 38.7)]


def test_bd_rate_identical_and_halved():
    assert bd_rate(CURVE, CURVE) == pytest.approx(0.0, abs=1e-9)
    half = [(r / 2, q) for r, q in CURVE]
    assert bd_rate(CURVE, half) == pytest.approx(-50.0, abs=1e-9)


def test_bd_rate_against_quadrature():
    other = [(1100, 30.5), (1900, 33.9), (3300, 36.2), (6500, 39.5)]
    got = bd_rate(CURVE, other)
    ref = bd_rate_quadrature(CURVE, other)
    assert got == pytest.approx(ref, rel=1e-3)


def test_bd_rate_errors():
    with pytest.raises(OverlapError):
        bd_rate(CURVE, [(r, q + 20) for r, q in CURVE])
    with pytest.raises(ValueError):
        bd_rate(CURVE[:3], CURVE)


def test_rdpoint_validation_and_csv(tmp_path):
    with pytest.raises(ValueError):
        RdPoint(0, 30, 0.9, 1, 1, "x")
    with pytest.raises(ValueError):
        RdPoint(10, 30, 1.5, 1, 1, "x")
    pts = [RdPoint(r, q, 0.9, 0.1, 0.2, f"p{i}") for i, (r, q) in enumerate(CURVE)]
    write_rd_csv(pts, tmp_path / "rd.csv")
    assert read_rd_csv(tmp_path / "rd.csv") == pts
    assert bd_rate(pts, pts) == pytest.approx(0.0, abs=1e-9)
