"""``hgsc`` command-line tool: encode, decode, metrics, rd, synth."""

from __future__ import annotations

import argparse
import json
import sys

from .codec import TAU_BY_SCENE, EncoderConfig, decode_file, encode_file
from .geometry import MAX_DEPTH
from .gs_core import load_cameras, load_ply, save_cameras, save_ply
from .lod import PRESET_BITS
from .metrics import bd_rate, read_rd_csv, write_rd_csv
from .partition import DEFAULT_FRACTIONS, DEFAULT_MAX_LEAF
from .pruner import DEFAULT_BETA, importance, importance_cdf, write_cdf_csv

QBIT_FLAGS = {"qbits_y": "sh_y", "qbits_uv": "sh_uv", "qbits_scale": "scale",
              "qbits_rot": "rotation", "qbits_opacity": "opacity"}


def _fractions(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("LoD fractions must be non-negative")
    return vals


def _qbits(text: str) -> int:
    if text == "max":
        return 16
    v = int(text)
    if not 1 <= v <= 30:
        raise argparse.ArgumentTypeError("bit depth must be in 1..30 (or 'max')")
    return v


def _add_codec_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("codec")
    g.add_argument("--preset", choices=sorted(PRESET_BITS), default="high",
                   help="residual bit depths (default: high)")
    g.add_argument("--scene-class", choices=sorted(TAU_BY_SCENE), default="small",
                   help="picks the default pruning ratio (small 60%%, big 66%%)")
    g.add_argument("--tau", type=float, help="percentage of primitives to prune")
    g.add_argument("--beta", type=float, default=DEFAULT_BETA, help="volume exponent of local significance")
    g.add_argument("--octree-depth", type=int, default=12, help=f"octree depth (1..{MAX_DEPTH})")
    g.add_argument("--anchors", type=float, default=DEFAULT_FRACTIONS[0], help="anchor fraction")
    g.add_argument("--lods", type=_fractions, default=DEFAULT_FRACTIONS[1:],
                   help="comma-separated LoD fractions (default 0.3,0.6)")
    g.add_argument("--k", type=int, default=3, help="neighbours used for LoD prediction")
    g.add_argument("--max-leaf", type=int, default=DEFAULT_MAX_LEAF, help="KD-tree block size")
    for flag in QBIT_FLAGS:
        g.add_argument("--" + flag.replace("_", "-"), dest=flag, type=_qbits,
                       help="override the preset bit depth for this group")
    g.add_argument("--qbits", type=_qbits, help="bit depth for every group (e.g. 'max')")
    a = p.add_argument_group("ablations")
    a.add_argument("--ablate-no-prune", "--no-prune", dest="no_prune", action="store_true")
    a.add_argument("--ablate-no-yuv", dest="no_yuv", action="store_true")
    a.add_argument("--ablate-prune-opacity-only", "--prune-opacity-only", dest="opacity_only",
                   action="store_true")
    a.add_argument("--ablate-per-block-lods", dest="per_block_lods", action="store_true",
                   help="sample LoDs per KD-tree block instead of over the pooled remainder")
    a.add_argument("--seedless", action="store_true",
                   help="start farthest point sampling at the first point instead of the outermost one")


def config_from_args(args, preset: str | None = None) -> EncoderConfig:
    bits = dict(PRESET_BITS[preset or args.preset])
    if args.qbits is not None:
        bits = dict.fromkeys(bits, args.qbits)
    for flag, group in QBIT_FLAGS.items():
        if getattr(args, flag) is not None:
            bits[group] = getattr(args, flag)
    tau = args.tau if args.tau is not None else TAU_BY_SCENE[args.scene_class]
    return EncoderConfig(tau=tau, beta=args.beta, depth=args.octree_depth, anchor_frac=args.anchors,
                         lod_fracs=tuple(args.lods), k=args.k, bits=bits, max_leaf=args.max_leaf,
                         prune=not args.no_prune, prune_opacity_only=args.opacity_only,
                         yuv=not args.no_yuv, pooled_lods=not args.per_block_lods,
                         seedless=args.seedless)


def _cameras_for(args, config: EncoderConfig):
    needs = config.prune and config.tau > 0 and not config.prune_opacity_only
    if args.cameras is None:
        if needs:
            raise SystemExit("error: --cameras is required unless pruning is disabled "
                             "(--ablate-no-prune, --tau 0) or opacity-only")
        return None
    return load_cameras(args.cameras)


def cmd_encode(args) -> int:
    config = config_from_args(args)
    cams = _cameras_for(args, config)
    res = encode_file(args.input, args.output, cams, config, args.stats)
    if args.cdf_csv:
        if cams is None and not config.prune_opacity_only:
            raise SystemExit("error: --cdf-csv needs --cameras")
        report = importance(load_ply(args.input), cams or [], config.beta, config.prune_opacity_only)
        write_cdf_csv(importance_cdf(report, use_global=args.cdf_global), args.cdf_csv)
    b = res.stats["bytes"]
    print(f"{res.stats['input_primitives']} -> {res.stats['voxels']} primitives, "
          f"{b['total']} bytes (geometry {b['geometry']}, anchors {b['anchors']}, "
          f"lods {'/'.join(map(str, b['lods']))}) in {res.stats['seconds']['total']:.2f}s")
    return 0


def cmd_decode(args) -> int:
    cloud = decode_file(args.input, args.output)
    print(f"decoded {len(cloud)} primitives -> {args.output}")
    return 0


def cmd_metrics(args) -> int:
    if args.bd_rate:
        a, b = (read_rd_csv(p) for p in args.bd_rate)
        print(json.dumps({"bd_rate_percent": bd_rate(a, b)}))
        return 0
    if not (args.input and args.reference and args.cameras):
        raise SystemExit("error: metrics needs --input, --reference and --cameras (or --bd-rate A B)")
    from .evaluate import compare_renders

    q = compare_renders(load_ply(args.reference), load_ply(args.input), load_cameras(args.cameras),
                        args.png_dir)
    print(json.dumps(q, indent=1))
    return 0


def cmd_rd(args) -> int:
    from .evaluate import rd_sweep

    cloud = load_ply(args.input)
    labels = [c for c in args.configs.split(",") if c]
    configs = {}
    for label in labels:
        if label in PRESET_BITS:
            configs[label] = config_from_args(args, label)
        elif label.startswith("q") and label[1:].isdigit():
            cfg = config_from_args(args)
            cfg.bits = dict.fromkeys(cfg.bits, int(label[1:]))
            configs[label] = cfg
        else:
            raise SystemExit(f"error: unknown configuration {label!r} (use a preset name or qN)")
    cams = _cameras_for(args, next(iter(configs.values())))
    points = rd_sweep(cloud, cams, load_cameras(args.eval_cameras), configs)
    write_rd_csv(points, args.output)
    for p in points:
        print(f"{p.label}: {p.size_bytes} bytes, {p.psnr_db:.2f} dB, SSIM {p.ssim:.4f}")
    return 0


def cmd_synth(args) -> int:
    from .synth import heldout_rig, synth_scene, training_rig

    save_ply(synth_scene(args.n, args.sh_degree, args.seed), args.output)
    if args.cameras:
        save_cameras(training_rig(args.train_views, args.size), args.cameras)
    if args.eval_cameras:
        save_cameras(heldout_rig(args.eval_views, args.size), args.eval_cameras)
    print(f"wrote {args.n} Gaussians to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hgsc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="compress a 3DGS PLY")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--cameras", help="camera rig JSON used for importance scoring")
    p.add_argument("--stats", help="write encoder statistics JSON here")
    p.add_argument("--cdf-csv", help="also write the importance CDF curve as CSV")
    p.add_argument("--cdf-global", action="store_true", help="CDF of global significance only")
    _add_codec_args(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decompress to a 3DGS PLY")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("metrics", help="rendered PSNR/SSIM between two PLYs, or BD-rate of two RD CSVs")
    p.add_argument("--input", help="decoded PLY")
    p.add_argument("--reference", help="reference PLY")
    p.add_argument("--cameras", help="evaluation camera rig JSON")
    p.add_argument("--png-dir", help="save the renders here")
    p.add_argument("--bd-rate", nargs=2, metavar=("ANCHOR_CSV", "TEST_CSV"))
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("rd", help="rate-distortion sweep to CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--cameras", help="training rig for importance scoring")
    p.add_argument("--eval-cameras", required=True, help="held-out views for PSNR/SSIM")
    p.add_argument("--configs", default="low,high",
                   help="comma-separated preset names or qN (N bits for every group)")
    _add_codec_args(p)
    p.set_defaults(func=cmd_rd)

    p = sub.add_parser("synth", help="write a synthetic scene and camera rigs")
    p.add_argument("--output", required=True)
    p.add_argument("--n", "--synth", dest="n", type=int, default=50_000)
    p.add_argument("--sh-degree", type=int, default=3, choices=range(4))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cameras", help="write the training rig here")
    p.add_argument("--eval-cameras", help="write the held-out rig here")
    p.add_argument("--train-views", type=int, default=24)
    p.add_argument("--eval-views", type=int, default=8)
    p.add_argument("--size", type=int, default=256)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"hgsc {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
