"""Exit criteria. Each test records one PASS/FAIL line, printed in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

import math
import sys
import time
import zlib
from fractions import Fraction

import numpy as np
import pytest

from hgsc.attributes import channel_groups
from hgsc.codec import EncoderConfig, decode, encode
from hgsc.entropy.deflate import lz_compress, lz_decompress
from hgsc.entropy.rangecoder import ModelTable, range_decode, range_encode
from hgsc.geometry import decode_positions, encode_occupancy, voxelize
from hgsc.gs_core import CameraView, GaussianCloud, raw_ply_size
from hgsc.lod import AnchorSet, knn_predict
from hgsc.metrics import bd_rate, psnr, ssim
from hgsc.partition import build_partition, fps, quota
from hgsc.pruner import ImportanceReport, global_significance, importance, importance_cdf, prune
from hgsc.raht import raht_forward, raht_inverse
from hgsc.renderer import render
from hgsc.synth import heldout_rig, synth_scene, training_rig
from oracles import (adaptive_cross_entropy, bd_rate_quadrature, brute_fps, brute_knn_predict,
                     raht_matrix)

pytestmark = pytest.mark.acceptance

RESULTS = {}


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {detail}"
    print(RESULTS[n])


def log_uniform_int(rng, lo, hi):
    return int(round(math.exp(rng.uniform(math.log(lo), math.log(hi)))))


def unique_coords(rng, n, depth):
    side = 1 << depth
    n = min(n, side ** 3)
    flat = rng.choice(side ** 3, n, replace=False) if side ** 3 <= 4 * n else \
        np.unique(rng.integers(0, side ** 3, 2 * n))[:n]
    flat = rng.permutation(flat)[:n]
    return np.stack(np.unravel_index(flat, (side,) * 3), -1).astype(np.int64)


# -- 1 -------------------------------------------------------------------------

def test_c01_raht_orthonormal_invertible():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst_energy = worst_inv = worst_dense = 0.0
    n_dense = 0
    for _ in range(1000):
        depth = int(rng.integers(1, 13))
        n = min(log_uniform_int(rng, 1, 4096), 8 ** depth)
        coords = unique_coords(rng, n, depth)
        x = rng.normal(size=(len(coords), int(rng.integers(1, 5))))
        c = raht_forward(coords, x)
        worst_energy = max(worst_energy, np.abs((c ** 2).sum(0) - (x ** 2).sum(0)).max())
        worst_inv = max(worst_inv, np.abs(raht_inverse(c, coords) - x).max())
        if len(coords) <= 64:
            T = raht_matrix(coords, depth)
            worst_dense = max(worst_dense, np.abs(c - T @ x).max(),
                              np.abs(raht_inverse(c, coords) - T.T @ c).max())
            n_dense += 1
    elapsed = time.perf_counter() - t0
    ok = worst_energy <= 1e-9 and worst_inv <= 1e-9 and worst_dense <= 1e-9 and elapsed < 30
    record(1, ok, f"1000 sets: energy err {worst_energy:.1e}, inverse err {worst_inv:.1e}, "
                  f"dense-oracle err {worst_dense:.1e} on {n_dense} sets, {elapsed:.1f}s")
    assert ok


# -- 2 -------------------------------------------------------------------------

def test_c02_octree_lossless():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    bad_sets = bad_bound = 0
    for _ in range(1000):
        d = int(rng.integers(1, 13))
        n = log_uniform_int(rng, 1, 100_000)
        kind = rng.integers(0, 3)
        if kind == 0:
            pts = rng.uniform(-1, 1, (n, 3)) * rng.uniform(1e-3, 1e3, 3)
        elif kind == 1:
            v = rng.normal(size=(n, 3))
            pts = v / np.linalg.norm(v, axis=1, keepdims=True) + rng.normal(size=3)
        else:
            pts = np.round(rng.normal(size=(n, 3)) * 8) / 8
        grid, inv = voxelize(pts, d)
        # independent quantisation of the sources against the transmitted cube
        side = 1 << d
        q = np.clip(np.floor((pts - grid.origin) / grid.cube_size * side), 0, side - 1).astype(np.int64)
        expect = np.unique(q, axis=0)
        dec = decode_positions(encode_occupancy(grid))
        got = np.unique(dec.coords, axis=0)
        bad_sets += int(not np.array_equal(got, expect))
        src_err = np.linalg.norm(dec.positions[inv] - pts, axis=1)
        bad_bound += int(np.any(src_err > dec.voxel_size * np.sqrt(3) / 2 * (1 + 1e-9)))
    elapsed = time.perf_counter() - t0
    ok = bad_sets == 0 and bad_bound == 0 and elapsed < 60
    record(2, ok, f"1000 clouds: {bad_sets} coordinate-set mismatches, {bad_bound} bound violations, "
                  f"{elapsed:.1f}s")
    assert ok


# -- 3 -------------------------------------------------------------------------

FUZZ_CASES = 1_000_000


def test_c03_entropy_coders():
    rng = np.random.default_rng(303)
    pool_f = rng.random(1 << 20)
    pool_b = rng.integers(0, 256, 1 << 20, dtype=np.uint8)
    t0 = time.perf_counter()

    # log-uniform lengths 0..4096, drawn once; offsets into the shared pools
    sizes = (np.exp(rng.random(FUZZ_CASES) * np.log(4097)) - 1).astype(np.int64)
    offsets = rng.integers(0, (1 << 20) - 4097, FUZZ_CASES)

    rc_fail = 0
    for i in range(FUZZ_CASES):
        n, off = int(sizes[i]), int(offsets[i])
        n_models = 1 + (i % 7)
        p = pool_f[(i * 31) % (1 << 20)]
        bits = (pool_f[off:off + n] < p).astype(np.uint8)
        ids = (pool_f[off + 1:off + 1 + n] * n_models).astype(np.int64)
        buf = range_encode(bits, ids, ModelTable(n_models))
        out = range_decode(buf, n, ids, ModelTable(n_models))
        rc_fail += int(not np.array_equal(out, bits))
    t_rc = time.perf_counter() - t0

    t0 = time.perf_counter()
    df_fail = zlib_fail = 0
    sizes = rng.permutation(sizes)
    for i in range(FUZZ_CASES):
        n, off = int(sizes[i]), int(offsets[i])
        raw = pool_b[off:off + n]
        mode = i % 4
        if mode == 1:
            raw = raw & np.uint8(3)                           # small alphabet
        elif mode == 2 and n:
            raw = np.resize(raw[:1 + i % 13], n)              # periodic, long matches
        elif mode == 3:
            raw = np.where(pool_f[off:off + n] < 0.9, 0, raw).astype(np.uint8)  # sparse
        data = raw.tobytes()
        c = lz_compress(data)
        df_fail += int(lz_decompress(c) != data)
        zlib_fail += int(zlib.decompress(c, wbits=-15) != data)
    t_df = time.perf_counter() - t0

    # large cases, including inputs above the 32 KiB window
    for n in (40_000, 200_000, 1_000_000):
        data = (rng.integers(0, 6, n).astype(np.uint8) * 40).tobytes()
        c = lz_compress(data)
        df_fail += int(lz_decompress(c) != data)
        zlib_fail += int(zlib.decompress(c, wbits=-15) != data)

    worst_ratio = 0.0
    ce_ok = True
    for p, n_models in ((0.5, 1), (0.1, 4), (0.01, 1), (0.3, 32), (0.9, 8)):
        n = 100_000
        ids = rng.integers(0, n_models, n)
        bits = (rng.random(n) < p * (0.5 + ids / max(n_models - 1, 1) * 0.5)).astype(np.uint8)
        size = len(range_encode(bits, ids, ModelTable(n_models)))
        ideal = adaptive_cross_entropy(bits.tolist(), ids.tolist(), n_models) / 8
        ce_ok &= size <= ideal * 1.02 + 16
        worst_ratio = max(worst_ratio, (size - 16) / ideal)

    ok = rc_fail == 0 and df_fail == 0 and zlib_fail == 0 and ce_ok
    record(3, ok, f"{FUZZ_CASES} range-coder cases ({rc_fail} failures, {t_rc:.0f}s), "
                  f"{FUZZ_CASES + 3} DEFLATE cases ({df_fail} failures, {zlib_fail} rejected by zlib, "
                  f"{t_df:.0f}s), worst (size-16)/cross-entropy {worst_ratio:.4f}")
    assert ok


# -- 4 -------------------------------------------------------------------------

def test_c04_fps_knn_oracles():
    rng = np.random.default_rng(404)
    fps_bad = knn_bad = 0
    instances = 0
    for i in range(300):
        n = log_uniform_int(rng, 1, 512)
        lattice = i % 2 == 1
        if lattice:
            side = max(2, int(round(n ** (1 / 3))) + 1)
            g = np.stack(np.meshgrid(*[np.arange(side)] * 3, indexing="ij"), -1).reshape(-1, 3)
            pts = g[rng.permutation(len(g))[:n]].astype(float) * rng.choice([1.0, 0.5, 3.0])
        else:
            pts = rng.uniform(-5, 5, (n, 3))
        m = int(rng.integers(0, n + 1))
        seedless = bool(rng.integers(0, 2))
        fps_bad += int(fps(pts, m, seedless).tolist() != brute_fps(pts, m, seedless))

        k = int(rng.integers(1, 7))
        gidx = rng.permutation(4 * n)[:n]
        attrs = rng.normal(size=(n, 5))
        anchors = AnchorSet(gidx, pts, attrs)
        targets = np.concatenate([pts[rng.integers(0, n, 20)],
                                  rng.uniform(-5, 5, (20, 3)),
                                  np.round(rng.uniform(-5, 5, (20, 3)) * 2) / 2])
        eps = 1e-12 * 4096
        got = knn_predict(targets, anchors, k, eps)
        knn_bad += int(not np.array_equal(got, brute_knn_predict(targets, gidx, pts, attrs, k, eps)))
        instances += 1
    ok = fps_bad == 0 and knn_bad == 0
    record(4, ok, f"{instances} instances n<=512 (half lattice ties): {fps_bad} FPS and "
                  f"{knn_bad} kNN-prediction mismatches vs brute force")
    assert ok


# -- 5 -------------------------------------------------------------------------

def test_c05_partition_determinism():
    rng = np.random.default_rng(505)
    mismatches = quota_bad = 0
    for i in range(500):
        n = log_uniform_int(rng, 1, 20_000)
        pts = rng.normal(size=(n, 3)) * rng.uniform(0.1, 10, 3)
        d = int(rng.integers(4, 13))
        enc_grid, _ = voxelize(pts, d)
        dec_grid = decode_positions(encode_occupancy(enc_grid))
        f = rng.dirichlet(np.ones(3))
        fr = tuple(float(np.float32(v)) for v in f)
        leaf = int(rng.choice([64, 256, 2048]))
        pooled = bool(i % 3)
        a = build_partition(enc_grid.coords.astype(float), fr[0], fr[1:], leaf, pooled, tol=1e-6)
        b = build_partition(dec_grid.coords.astype(float), fr[0], fr[1:], leaf, pooled, tol=1e-6)
        mismatches += int(a.to_bytes() != b.to_bytes())
        m = len(dec_grid)
        want_a = max(1, quota(fr[0], m))
        want_l1 = min(quota(fr[1], m), m - want_a)
        quota_bad += int(len(a.anchor_indices) != want_a or len(a.lod_indices[0]) != want_l1
                         or len(a.lod_indices[1]) != m - want_a - want_l1)
    p = build_partition(rng.normal(size=(1000, 3)), 0.1, (0.3, 0.6), 2048)
    sizes = [len(p.anchor_indices)] + [len(x) for x in p.lod_indices]
    ok = mismatches == 0 and quota_bad == 0 and sizes == [100, 300, 600]
    record(5, ok, f"500 geometries: {mismatches} encoder/decoder partition mismatches, "
                  f"{quota_bad} quota errors; n=1000 split {'/'.join(map(str, sizes))}")
    assert ok


# -- 6 -------------------------------------------------------------------------

def random_pipeline(rng):
    n = log_uniform_int(rng, 20, 4000)
    c = synth_scene(n, sh_degree=int(rng.integers(0, 4)), seed=int(rng.integers(1 << 30)))
    f = rng.dirichlet(np.ones(int(rng.integers(2, 5))))
    cfg = EncoderConfig(
        tau=float(rng.choice([0.0, 30.0, 60.0])), depth=int(rng.integers(4, 15)),
        anchor_frac=float(f[0]), lod_fracs=tuple(float(v) for v in f[1:]), k=int(rng.integers(1, 7)),
        bits=dict(zip(channel_groups(1), (int(b) for b in rng.integers(1, 17, 5)))),
        max_leaf=int(rng.choice([32, 256, 2048])), prune_opacity_only=bool(rng.integers(0, 2)),
        yuv=bool(rng.integers(0, 2)), pooled_lods=bool(rng.integers(0, 2)),
        seedless=bool(rng.integers(0, 2)))
    return c, cfg


def test_c06_closed_loop_lockstep():
    rng = np.random.default_rng(606)
    rig = training_rig(3, size=32)
    bad = 0
    lods = 0
    for _ in range(200):
        cloud, cfg = random_pipeline(rng)
        enc = encode(cloud, rig, cfg)
        dec = decode(enc.bitstream)
        same = (np.array_equal(dec.attrs, enc.recon) and dec.partition == enc.partition
                and np.isfinite(dec.attrs).all())
        for members, rec in zip(dec.partition.lod_indices, dec.lod_recons):
            same &= np.array_equal(rec, enc.recon[members])
            lods += 1
        bad += int(not same)
    ok = bad == 0
    record(6, ok, f"200 random pipelines ({lods} LoDs): {bad} with encoder/decoder divergence")
    assert ok


# -- 7 -------------------------------------------------------------------------

def test_c07_end_to_end_fidelity_bound():
    worst_excess = -np.inf
    checked = 0
    for seed, degree, preset, n in ((1, 3, "high", 20_000), (2, 3, "low", 20_000), (3, 1, "high", 8000),
                                    (4, 0, "max", 8000)):
        cloud = synth_scene(n, sh_degree=degree, seed=seed)
        enc = encode(cloud, None, EncoderConfig.preset(preset, tau=0, prune=False))
        dec = decode(enc.bitstream)
        groups = channel_groups(cloud.n_bases, True)
        err = np.abs(dec.attrs - enc.attrs)
        # anchors: near-lossless steps, no residual quantisation
        worst_excess = max(worst_excess, err[dec.partition.anchor_indices].max() - 1e-3)
        for members in dec.partition.lod_indices:
            if len(members) == 0:
                continue
            for name, chans in groups.items():
                if len(chans) == 0:
                    continue
                v = enc.attrs[members][:, chans]
                span = v.max() - v.min()
                q = (span if span > 0 else 1.0) / (1 << enc_bits(preset)[name])
                worst_excess = max(worst_excess, err[np.ix_(members, chans)].max() - (q / 2 + 1e-3))
        checked += 1
    ok = worst_excess <= 0
    record(7, ok, f"{checked} synthetic scenes, tau 0: worst error minus (q/2 + 1e-3) = {worst_excess:.2e}")
    assert ok


def enc_bits(preset):
    from hgsc.lod import PRESET_BITS

    return PRESET_BITS[preset]


# -- 8 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def scene50k():
    return synth_scene(50_000, sh_degree=3, seed=0)


def test_c08_rate_behaviour(scene50k):
    t0 = time.perf_counter()
    cams, views = training_rig(), heldout_rig()
    raw = raw_ply_size(len(scene50k), scene50k.n_bases)
    high = encode(scene50k, cams, EncoderConfig.preset("high", tau=60.0))
    low = encode(scene50k, cams, EncoderConfig.preset("low", tau=60.0))
    dec = decode(high.bitstream).cloud
    p = np.mean([psnr(render(high.pruned, v).image, render(dec, v).image) for v in views])
    elapsed = time.perf_counter() - t0
    r_high = len(high.bitstream) / raw
    r_low = len(low.bitstream) / raw
    ok = r_high <= 0.5 and r_low <= 0.3 and p >= 35 and elapsed < 300
    record(8, ok, f"50k synthetic: high {r_high:.3f}x raw, low {r_low:.3f}x raw, "
                  f"high-preset PSNR {p:.2f} dB over {len(views)} held-out views, {elapsed:.0f}s")
    assert ok


def test_geometry_is_minor_share(scene50k):
    enc = encode(scene50k, training_rig(), EncoderConfig())
    b = enc.stats["bytes"]
    assert len(decode(enc.bitstream).cloud) == enc.stats["voxels"]
    assert b["geometry"] < 0.15 * b["total"]


# -- 9 -------------------------------------------------------------------------

def test_c09_pruning():
    rng = np.random.default_rng(909)
    count_bad = 0
    for n in list(range(1, 120)) + [1000, 4321, 50_000]:
        for tau in (0, 10, 33.3, 60, 66, 99.5):
            s = rng.random(n)
            report = ImportanceReport(s, np.ones(n), s, 0.1, 1.0)
            kept = prune(_dummy(n), report, tau)
            count_bad += int(n - len(kept) != math.floor(Fraction(str(tau)) * n / 100))

    # a single Gaussian far larger than the image: alpha is constant over every covered pixel
    a = 0.6
    g = GaussianCloud.from_arrays([[0, 0, 3.0]], [[np.log(500.0)] * 3], [[1, 0, 0, 0]],
                                  [np.log(a / (1 - a))], np.zeros((1, 1, 3)))
    cam = CameraView(40, 30, 20.0, 20.0, 20.0, 15.0)
    covered = int(np.count_nonzero(render(g, cam).transmittance < 1))
    i_g = global_significance(g, [cam])[0]
    rel = abs(i_g - covered * a) / (covered * a)

    curves_ok = True
    for scores in (rng.random(500), rng.gamma(0.2, size=10_000), np.ones(100)):
        curve = importance_cdf(ImportanceReport(scores, np.ones_like(scores), scores, 0.1, 1.0))
        curves_ok &= bool(np.all(np.diff(curve[:, 1]) >= 0)) and tuple(curve[-1]) == (1.0, 1.0)
    scene = synth_scene(3000, seed=9)
    curve = importance_cdf(importance(scene, training_rig(4, size=48)))
    curves_ok &= bool(np.all(np.diff(curve[:, 1]) >= 0)) and tuple(curve[-1]) == (1.0, 1.0)

    ok = count_bad == 0 and rel <= 0.01 and curves_ok
    record(9, ok, f"prune counts: {count_bad} errors; single-Gaussian I_g vs P*alpha rel err {rel:.1e} "
                  f"(P={covered}); CDF monotone ending at (1,1): {curves_ok}")
    assert ok


def _dummy(n):
    return GaussianCloud.from_arrays(np.zeros((n, 3)), np.zeros((n, 3)), np.tile([1.0, 0, 0, 0], (n, 1)),
                                     np.zeros(n), np.zeros((n, 1, 3)))


# -- 10 ------------------------------------------------------------------------

def test_c10_metrics():
    rng = np.random.default_rng(1010)
    img = rng.random((64, 64, 3))
    checks = {
        "identical psnr": psnr(img, img) == 99.0,
        "identical ssim": abs(ssim(img, img) - 1) < 1e-12,
        "offset psnr": abs(psnr(np.full((8, 8, 3), 0.2), np.full((8, 8, 3), 0.3)) - 20) < 1e-9,
    }
    sym = []
    for _ in range(20):
        a, b = rng.random((32, 32, 3)), rng.random((32, 32, 3))
        s = ssim(a, b)
        sym.append(-1 <= s <= 1 and abs(s - ssim(b, a)) < 1e-9)
    checks["ssim range/symmetry"] = all(sym)
    curve = [(1000, 30.0), (1800, 33.1), (3500, 36.0), (7000, 38.7)]
    checks["identical curves"] = abs(bd_rate(curve, curve)) < 1e-9
    checks["halved rates"] = abs(bd_rate(curve, [(r / 2, q) for r, q in curve]) + 50) < 1e-9
    worst = 0.0
    for _ in range(50):
        q = np.sort(rng.uniform(25, 45, 4))
        ra = np.sort(rng.uniform(500, 5000, 4)) * np.linspace(1, 4, 4)
        rb = np.sort(ra * rng.uniform(0.5, 1.5))
        qa, qb = q, np.sort(q + rng.uniform(-1, 1))
        a, b = list(zip(ra, qa)), list(zip(rb, qb))
        got, ref = bd_rate(a, b), bd_rate_quadrature(a, b)
        worst = max(worst, abs(got - ref) / max(abs(ref), 1e-12))
    checks["quadrature oracle"] = worst <= 1e-3
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    record(10, ok, f"{len(checks)} metric checks, BD-rate vs quadrature worst rel err {worst:.1e}"
                   + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
