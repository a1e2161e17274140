import numpy as np
import pytest

from hgsc.codec import (FLAG_POOLED, FLAG_YUV, ContainerError, EncoderConfig, Header, decode, encode,
                        read_header)
from hgsc.bytesio import ByteReader, ByteWriter
from hgsc.gs_core import load_ply, save_ply
from hgsc.synth import synth_scene, training_rig


@pytest.fixture(scope="module")
def scene():
    return synth_scene(3000, sh_degree=2, seed=3)


@pytest.fixture(scope="module")
def rig():
    return training_rig(6, size=64)


@pytest.fixture(scope="module")
def encoded(scene, rig):
    return encode(scene, rig, EncoderConfig(max_leaf=256))


def test_header_roundtrip():
    h = Header(FLAG_POOLED | FLAG_YUV, 3, (0.1, 0.3, 0.6), 2048, 3)
    w = ByteWriter()
    h.write(w)
    raw = w.getvalue()
    back = Header.read(ByteReader(raw))
    w2 = ByteWriter()
    back.write(w2)
    assert w2.getvalue() == raw
    assert back.lod_count == 2 and back.yuv and back.pooled and not back.seedless


def test_stream_decodes_with_matching_counts(encoded):
    dec = decode(encoded.bitstream)
    assert len(dec.cloud) == encoded.stats["voxels"] == len(encoded.grid)
    assert encoded.stats["pruned_primitives"] == 3000 - 1800
    assert np.isfinite(dec.attrs).all()
    assert np.array_equal(dec.attrs, encoded.recon)
    assert dec.partition == encoded.partition
    b = encoded.stats["bytes"]
    assert b["total"] == len(encoded.bitstream)
    assert b["header"] + b["geometry"] + b["anchors"] + sum(b["lods"]) < b["total"]


def test_encoding_deterministic(scene, rig, encoded):
    assert encode(scene, rig, EncoderConfig(max_leaf=256)).bitstream == encoded.bitstream


def test_decode_twice_identical_ply(tmp_path, encoded):
    save_ply(decode(encoded.bitstream).cloud, tmp_path / "a.ply")
    save_ply(decode(encoded.bitstream).cloud, tmp_path / "b.ply")
    assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()


def test_bad_magic_and_version(encoded):
    s = bytearray(encoded.bitstream)
    with pytest.raises(ContainerError, match="magic"):
        decode(b"XXXX" + bytes(s[4:]))
    s[4] = 9
    with pytest.raises(ContainerError, match="version 9"):
        decode(bytes(s))
    s[4] = 1
    s[5] |= 0x80
    with pytest.raises(ContainerError, match="flag"):
        decode(bytes(s))


def test_truncation_names_section(encoded):
    s = encoded.bitstream
    b = encoded.stats["bytes"]
    h = b["header"]
    cuts = {"header": h - 2, "geometry": h + 10, "anchor": h + 3 + b["geometry"] + 20,
            "lod[1]": len(s) - 4 - 10, "checksum": len(s) - 2}
    for name, cut in cuts.items():
        with pytest.raises(ContainerError) as exc:
            decode(s[:cut])
        assert name in str(exc.value)


def test_corruption_detected(encoded):
    s = bytearray(encoded.bitstream)
    s[len(s) // 2] ^= 0x10
    with pytest.raises(ContainerError):
        decode(bytes(s))


def test_no_yuv_flag(scene, rig):
    enc = encode(scene, rig, EncoderConfig(yuv=False, max_leaf=256))
    assert read_header(enc.bitstream).flags & FLAG_YUV == 0
    dec = decode(enc.bitstream)
    assert np.array_equal(dec.attrs, enc.recon)


@pytest.mark.parametrize("kw", [{"pooled_lods": False}, {"seedless": True}, {"prune_opacity_only": True},
                                {"lod_fracs": (0.2, 0.3, 0.4), "k": 5}])
def test_variants_decode_in_lockstep(scene, rig, kw):
    enc = encode(scene, rig, EncoderConfig(max_leaf=256, **kw))
    dec = decode(enc.bitstream)
    assert np.array_equal(dec.attrs, enc.recon)
    assert dec.partition == enc.partition


def test_near_lossless_configuration(scene):
    cfg = EncoderConfig.preset("max", tau=0, depth=16, prune=False, max_leaf=512)
    enc = encode(scene, None, cfg)
    dec = decode(enc.bitstream)
    assert len(dec.cloud) == 3000
    assert np.abs(dec.attrs - enc.attrs).max() <= 1e-3


def test_decoded_geometry_close_to_pruned(encoded):
    dec = decode(encoded.bitstream)
    g = encoded.grid
    from hgsc.geometry import voxelize

    _, inv = voxelize(encoded.pruned.positions, g.depth)
    err = np.linalg.norm(dec.cloud.positions[inv] - encoded.pruned.positions, axis=1)
    assert err.max() <= g.voxel_size * np.sqrt(3) / 2 * (1 + 1e-9)


def test_stage_named_in_errors(scene):
    with pytest.raises(ValueError, match="pruning"):
        encode(scene, None, EncoderConfig())
    with pytest.raises(ValueError, match="partition"):
        encode(scene, None, EncoderConfig(prune=False, lod_fracs=(0.5, 0.6)))


def test_ply_roundtrip_of_decoded(tmp_path, encoded):
    dec = decode(encoded.bitstream).cloud
    save_ply(dec, tmp_path / "d.ply")
    back = load_ply(tmp_path / "d.ply")
    assert len(back) == len(dec)
    assert np.abs(back.positions - dec.positions).max() < 1e-5
