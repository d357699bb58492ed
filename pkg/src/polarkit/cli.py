"""``polarkit`` command line.

Each subcommand wraps one pipeline. Exit codes: 0 success, 2 usage error,
3 data error, 4 numeric/degenerate error; failures print
``polarkit: error[<category>]: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import formats, geometry, metrics, polar_decode, sfp, synth, viz
from .dataset_io import load_manifest, sync_frames
from .errors import DataError, PolarkitError

log = logging.getLogger("polarkit")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
DEFAULT_CAMERA_HEIGHT = 1.65


class UsageError(Exception):
    pass


def _write_json(doc, out: str | None) -> None:
    text = json.dumps(doc, indent=2, allow_nan=False) + "\n"
    sys.stdout.write(text)
    if out:
        Path(out).write_text(text, encoding="utf-8")


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _json_float(x):
    return None if x is None or not math.isfinite(x) else float(x)


# subcommands


def cmd_decode(args) -> int:
    raw = formats.read_mosaic(args.raw)
    if args.layout:
        raw = polar_decode.PolarRaw(raw.data, raw.bit_depth, args.layout)
    dtype = np.float64 if args.dtype == "float64" else np.float32
    planes = polar_decode.demosaic(raw, dtype=dtype)
    iad = polar_decode.compute_iad(polar_decode.compute_stokes(planes), args.validity_threshold)
    feats = polar_decode.encode_features(iad)
    out = _outdir(args.out_dir)
    formats.write_planes(out / "planes.plnr", [planes.p0, planes.p45, planes.p90, planes.p135])
    formats.write_planes(out / "iad.plnr", [iad.intensity, iad.aolp, iad.dolp, iad.valid])
    formats.write_planes(out / "features.plnr", [feats.f1, feats.f2, feats.f3])
    viz.save_png(out / "intensity.png", viz.gray(iad.intensity))
    viz.save_png(out / "aolp.png", viz.aolp_rgb(iad.aolp, iad.valid))
    viz.save_png(out / "dolp.png", viz.dolp_rgb(iad.dolp))
    log.info("decoded %dx%d mosaic, %.1f%% valid", raw.width, raw.height, 100 * iad.valid.mean())
    return EXIT_OK


def _read_iad(path) -> polar_decode.IadImage:
    planes = formats.read_planes(path)
    if planes.shape[0] != 4:
        raise DataError(f"{path}: expected 4 planes (I, AoLP, DoLP, valid), got {planes.shape[0]}")
    i, a, d, v = (p.astype(np.float64) for p in planes)
    return polar_decode.IadImage(i, a, d, v > 0.5)


def _read_normals(path) -> sfp.NormalImage:
    planes = formats.read_planes(path)
    if planes.shape[0] != 4:
        raise DataError(f"{path}: expected 4 planes (nx, ny, nz, valid), got {planes.shape[0]}")
    normals = np.stack([planes[0], planes[1], planes[2]], axis=-1).astype(np.float64)
    valid = planes[3] > 0.5
    norm = np.linalg.norm(normals, axis=-1, keepdims=True)
    normals = np.where(valid[..., None], normals / np.where(norm > 0, norm, 1), 0.0)
    return sfp.NormalImage(normals, valid)


def _write_normals(path, normals: sfp.NormalImage) -> None:
    n = normals.normals
    formats.write_planes(path, [n[..., 0], n[..., 1], n[..., 2], normals.valid])


def cmd_sfp(args) -> int:
    iad = _read_iad(args.iad)
    # AoLP/DoLP stored as float32 may sit a hair outside their ranges
    aolp = np.where(np.asarray(iad.aolp) >= math.pi, 0.0, np.clip(iad.aolp, 0.0, None))
    iad = polar_decode.IadImage(iad.intensity, aolp, np.clip(iad.dolp, 0.0, 1.0), iad.valid)
    cands = sfp.normals_from_polarization(iad, sfp.Material(args.n), args.mode, args.tol)
    if args.prior:
        prior = _read_normals(args.prior)
    else:
        frontal = np.zeros(cands.shape + (3,))
        frontal[..., 2] = 1.0
        prior = sfp.NormalImage(frontal, np.ones(cands.shape, dtype=bool))
    normals = sfp.disambiguate_with_prior(cands, prior)
    out = _outdir(args.out_dir)
    formats.write_planes(out / "candidates.plnr", [cands.azimuths[..., 0], cands.azimuths[..., 1],
                                                   cands.zeniths[..., 0], cands.zeniths[..., 1], cands.valid])
    _write_normals(out / "normals.plnr", normals)
    viz.save_png(out / "normals.png", viz.normals_rgb(normals.normals, normals.valid))
    log.info("%d of %d pixels with a normal", int(normals.valid.sum()), normals.valid.size)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    pairs = formats.read_plane_pairs(args.pairs)
    transform = geometry.calibrate_extrinsic_from_planes(pairs)
    camera = formats.read_calibration(args.intrinsics)[0] if args.intrinsics else None
    formats.write_calibration(args.out, camera, transform)
    rot_res, off_res = [], []
    for lidar, cam in pairs:
        mapped = transform.apply_to_plane(lidar)
        rot_res.append(math.degrees(math.acos(max(-1.0, min(1.0, float(mapped.normal @ cam.normal))))))
        off_res.append(float(mapped.offset - cam.offset))
    _write_json({
        "rotation": transform.rotation.tolist(),
        "translation": transform.translation.tolist(),
        "normal_residual_deg": rot_res,
        "offset_residual_m": off_res,
    }, args.json_out)
    return EXIT_OK


def _load_calibration(path):
    camera, transform = formats.read_calibration(path)
    if camera is None:
        raise DataError(f"{path}: calibration has no intrinsics")
    return camera, transform or geometry.RigidTransform.identity()


def cmd_project(args) -> int:
    camera, extrinsic = _load_calibration(args.calib)
    cloud = formats.read_cloud(args.cloud)
    depth = geometry.project_points(cloud, extrinsic, camera)
    out = _outdir(args.out_dir)
    formats.write_planes(out / "depth.plnr", [depth])
    viz.save_png(out / "depth.png", viz.depth_gray(depth))
    log.info("%d pixels filled", int((depth > 0).sum()))
    return EXIT_OK


def _bev_spec(args) -> geometry.BevGridSpec:
    return geometry.BevGridSpec(args.cell_size, tuple(args.x_range), tuple(args.z_range))


def _ground(args, extrinsic) -> geometry.Plane:
    if args.cloud:
        cloud = formats.read_cloud(args.cloud).transformed(extrinsic)
        return geometry.ground_plane_from_cloud(cloud, seed=args.seed)
    return geometry.ground_plane_from_height(args.camera_height)


def cmd_bev(args) -> int:
    camera, extrinsic = _load_calibration(args.calib)
    conf = formats.read_image_plane(args.confidence)
    grid = geometry.bev_project(conf, camera, _ground(args, extrinsic), _bev_spec(args))
    out = _outdir(args.out_dir)
    formats.write_planes(out / "bev.plnr", [grid.values, grid.counts])
    # far cells at the top, like a map
    viz.save_png(out / "bev.png", viz.gray(grid.values[::-1]))
    return EXIT_OK


def _pair_lists(pred, gt):
    if len(pred) != len(gt):
        raise UsageError(f"got {len(pred)} prediction files but {len(gt)} ground-truth files")
    return list(zip(pred, gt))


def cmd_eval_seg(args) -> int:
    frames, docs = [], []
    bev = None
    if args.calib:
        camera, extrinsic = _load_calibration(args.calib)
        bev = (camera, _ground(args, extrinsic), _bev_spec(args))
    for pred_path, gt_path in _pair_lists(args.pred, args.gt):
        conf = formats.read_image_plane(pred_path)
        gt = formats.read_image_plane(gt_path)
        if bev is not None:
            camera, ground, spec = bev
            conf_grid = geometry.bev_project(conf, camera, ground, spec)
            gt_grid = geometry.bev_project(gt, camera, ground, spec)
            conf, gt, valid = conf_grid.values, gt_grid.values, conf_grid.observed
        else:
            valid = np.ones(gt.shape, dtype=bool)
        if np.any((conf < 0) | (conf > 1)):
            raise DataError(f"{pred_path}: confidence outside [0, 1]")
        gt = gt >= args.gt_threshold
        scores = metrics.seg_metrics(conf, gt, valid)
        frames.append((conf, gt, valid))
        docs.append({"pred": str(pred_path), "gt": str(gt_path), **scores.to_dict(),
                     "threshold": _json_float(scores.threshold)})
    if args.aggregate == "pixel":
        aggregate = metrics.pooled_seg_metrics(frames).to_dict()
    else:
        aggregate = metrics.mean_scores([metrics.seg_metrics(*f) for f in frames])
    _write_json({"aggregate_mode": args.aggregate, "frames": docs, "aggregate": aggregate,
                 "domain": "bev" if bev else "image"}, args.out)
    return EXIT_OK


def _read_depth(path, scale: float) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".plnr":
        return formats.read_planes(path)[0].astype(np.float64)
    if path.suffix.lower() == ".pgm":
        data, _, _ = formats.read_pgm(path)
        return data.astype(np.float64) / scale
    raise DataError(f"{path}: depth maps must be .plnr (meters) or .pgm (value / depth-scale)")


def cmd_eval_depth(args) -> int:
    frames, docs, per_frame = [], [], []
    for pred_path, gt_path in _pair_lists(args.pred, args.gt):
        pred = _read_depth(pred_path, args.depth_scale)
        gt = _read_depth(gt_path, args.depth_scale)
        valid = gt > 0
        scores = metrics.depth_metrics(pred, gt, valid, args.d_min, args.d_max, args.median_scale)
        frames.append((pred, gt, valid))
        per_frame.append(scores)
        docs.append({"pred": str(pred_path), "gt": str(gt_path), **scores.to_dict()})
    if args.aggregate == "pixel":
        aggregate = metrics.pooled_depth_metrics(frames, args.d_min, args.d_max, args.median_scale).to_dict()
    else:
        aggregate = metrics.mean_scores(per_frame)
    _write_json({"aggregate_mode": args.aggregate, "frames": docs, "aggregate": aggregate}, args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    scene = synth.load_scene(args.scene)
    if args.seed is not None:
        scene = synth.with_seed(scene, args.seed)
    result = synth.render_scene(scene)
    raw = synth.mosaic_from_iad(result.iad, scene.bit_depth, scene.layout, scene.noise_sigma, scene.seed)
    out = _outdir(args.out_dir)
    formats.write_mosaic(out / "mosaic.pgm", raw)
    formats.write_planes(out / "depth.plnr", [result.depth])
    _write_normals(out / "normals.plnr", result.normals)
    iad = result.iad
    formats.write_planes(out / "iad_gt.plnr", [iad.intensity, iad.aolp, iad.dolp, iad.valid])
    viz.save_png(out / "normals.png", viz.normals_rgb(result.normals.normals, result.normals.valid))
    viz.save_png(out / "depth.png", viz.depth_gray(result.depth))
    cam = scene.camera
    formats.write_calibration(out / "camera.txt", cam, geometry.RigidTransform.identity())
    return EXIT_OK


def _read_timestamps(path) -> list[float]:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return load_manifest(path).timestamps
    out = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if line:
            try:
                out.append(float(line.split(",")[0]))
            except ValueError:
                raise formats.ParseError("malformed timestamp", lineno) from None
    return out


def cmd_sync(args) -> int:
    pairs = sync_frames(_read_timestamps(args.camera), _read_timestamps(args.other), args.max_skew)
    _write_json({"max_skew": args.max_skew, "pairs": [list(p) for p in pairs]}, args.out)
    return EXIT_OK


# argument parsing


def _positive(kind=float):
    def parse(text):
        val = kind(text)
        if not val > 0 or not math.isfinite(val):
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return val
    return parse


def _nonnegative(text):
    val = float(text)
    if not val >= 0 or not math.isfinite(val):
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return val


def _refractive_index(text):
    val = float(text)
    if not val > 1 or not math.isfinite(val):
        raise argparse.ArgumentTypeError(f"refractive index must be > 1, got {text}")
    return val


def _layout(text):
    try:
        return polar_decode.validate_layout(int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_global(p, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=default, help="random seed (overrides scene/RANSAC seeds)")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS if suppress else 1,
                   help="worker threads; results never depend on it")
    p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="suppress informational messages")


def _add_bev_options(p):
    p.add_argument("--cell-size", type=_positive(), default=0.05, help="BEV cell size, meters")
    p.add_argument("--x-range", type=float, nargs=2, default=[-10.0, 10.0], metavar=("MIN", "MAX"),
                   help="lateral BEV extent, meters")
    p.add_argument("--z-range", type=float, nargs=2, default=[0.0, 40.0], metavar=("MIN", "MAX"),
                   help="forward BEV extent, meters")
    p.add_argument("--cloud", help="lidar cloud used to fit the ground plane")
    p.add_argument("--camera-height", type=_positive(), default=DEFAULT_CAMERA_HEIGHT,
                   help="camera height above flat ground when no cloud is given, meters")


def _add_aggregate(p):
    p.add_argument("--aggregate", choices=("frame", "pixel"), default="frame",
                   help="average per-frame scores or pool all cells")
    p.add_argument("--out", help="also write the JSON report here")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="polarkit", description=__doc__.splitlines()[0], formatter_class=fmt)
    _add_global(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, formatter_class=fmt)
        _add_global(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("decode", cmd_decode, "decode a polarization mosaic into I/AoLP/DoLP, features and previews")
    p.add_argument("raw", help="mosaic PGM")
    p.add_argument("out_dir")
    p.add_argument("--validity-threshold", type=_nonnegative, default=polar_decode.DEFAULT_VALIDITY_THRESHOLD,
                   help="minimum polarized fraction for a valid AoLP")
    p.add_argument("--layout", type=_layout, help="override the mosaic angle layout, e.g. 90,45,135,0")
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32", help="working precision")

    p = add("sfp", cmd_sfp, "recover surface normals from a decoded iad.plnr")
    p.add_argument("iad", help="iad.plnr from decode")
    p.add_argument("out_dir")
    p.add_argument("--n", type=_refractive_index, default=sfp.DEFAULT_N, help="refractive index")
    p.add_argument("--mode", choices=[m.value for m in sfp.ReflectionMode], required=True,
                   help="reflection model of the imaged surfaces")
    p.add_argument("--tol", type=_positive(), default=sfp.DEFAULT_TOL, help="zenith root tolerance, radians")
    p.add_argument("--prior", help="normals.plnr used to pick among candidates (default: frontal)")

    p = add("calibrate", cmd_calibrate, "lidar-to-camera extrinsics from corresponding planes")
    p.add_argument("pairs", help="plane-pairs CSV")
    p.add_argument("out", help="calibration file to write")
    p.add_argument("--intrinsics", help="calibration file whose intrinsics are copied to the output")
    p.add_argument("--json-out", help="also write the JSON summary here")

    p = add("project", cmd_project, "project a lidar cloud into a sparse depth image")
    p.add_argument("cloud", help="PCL0 or ASCII XYZ cloud")
    p.add_argument("calib", help="calibration file")
    p.add_argument("out_dir")

    p = add("bev", cmd_bev, "resample an image-space map onto the ground plane")
    p.add_argument("confidence", help="PLNR/PGM/PNG map")
    p.add_argument("calib", help="calibration file")
    p.add_argument("out_dir")
    _add_bev_options(p)

    p = add("eval-seg", cmd_eval_seg, "free-space segmentation metrics")
    p.add_argument("--pred", nargs="+", required=True, help="confidence maps in [0, 1]")
    p.add_argument("--gt", nargs="+", required=True, help="ground-truth masks")
    p.add_argument("--gt-threshold", type=float, default=0.5, help="ground-truth mask binarization level")
    p.add_argument("--calib", help="evaluate in bird's-eye view using this calibration")
    _add_bev_options(p)
    _add_aggregate(p)

    p = add("eval-depth", cmd_eval_depth, "monocular depth metrics")
    p.add_argument("--pred", nargs="+", required=True, help="predicted depth maps")
    p.add_argument("--gt", nargs="+", required=True, help="ground-truth depth maps (0 = missing)")
    p.add_argument("--d-min", type=_positive(), default=metrics.DEFAULT_D_MIN, help="minimum evaluated depth, m")
    p.add_argument("--d-max", type=_positive(), default=metrics.DEFAULT_D_MAX, help="maximum evaluated depth, m")
    p.add_argument("--median-scale", action=argparse.BooleanOptionalAction, default=True,
                   help="rescale predictions by median(gt)/median(pred)")
    p.add_argument("--depth-scale", type=_positive(), default=256.0, help="PGM value per meter")
    _add_aggregate(p)

    p = add("synth", cmd_synth, "render a synthetic scene: mosaic plus ground truth")
    p.add_argument("scene", help="scene file")
    p.add_argument("out_dir")

    p = add("sync", cmd_sync, "associate camera timestamps with another sensor's")
    p.add_argument("camera", help="manifest CSV or one timestamp per line")
    p.add_argument("other", help="manifest CSV or one timestamp per line")
    p.add_argument("--max-skew", type=_nonnegative, default=0.05, help="largest accepted offset, seconds")
    p.add_argument("--out", help="also write the JSON report here")
    return parser


def _validate(args, parser) -> None:
    if getattr(args, "d_min", None) is not None and not args.d_min < args.d_max:
        parser.error("--d-min must be smaller than --d-max")
    for name in ("x_range", "z_range"):
        rng = getattr(args, name, None)
        if rng is not None and not rng[0] < rng[1]:
            parser.error(f"--{name.replace('_', '-')} must be increasing")
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be >= 1")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(args, parser)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="polarkit: %(message)s")
    if args.seed is None and args.command != "synth":
        args.seed = 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"polarkit: error[usage]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PolarkitError as exc:
        print(f"polarkit: error[{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if exc.category == "numeric" else EXIT_DATA
    except (OSError, ValueError) as exc:
        print(f"polarkit: error[data]: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
