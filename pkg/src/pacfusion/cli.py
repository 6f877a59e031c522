"""Command-line front end for the fusion pipeline.

Exit codes: 0 success, 1 usage error, 2 format error, 3 verification
failure. Every command is deterministic under a fixed --seed. The
PACF_THREADS environment variable caps the worker count used for batch
neighbor queries.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fusion, geometry, kdtree, kitti, losses
from .types import PointCloud

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_VERIFY = 3

BEV_RESOLUTION = 0.1  # meters per pixel


@dataclass
class RunConfig:
    k: int = 3
    d: float = np.inf
    d_o: int = 8
    mlp: tuple[int, ...] | None = None
    seed: int = 0
    roi: geometry.RegionOfInterest = geometry.RegionOfInterest()
    n_sample: int = 16384
    mode: str = "v1"
    lam: float = 1.0
    alpha: float = 0.25
    gamma: float = 2.0


def _worker_count() -> int:
    cap = os.environ.get("PACF_THREADS")
    if cap:
        return max(1, int(cap))
    return min(8, os.cpu_count() or 1)


def _batch_knn(tree: kdtree.KdTree, targets: np.ndarray, k: int, d: float) -> np.ndarray:
    idx = np.empty((len(targets), k), dtype=np.int64)

    def run(span):
        lo, hi = span
        for i in range(lo, hi):
            idx[i] = kdtree.knn_query(tree, targets[i], k, d).indices

    workers = _worker_count()
    bounds = np.linspace(0, len(targets), workers + 1).astype(int)
    spans = list(zip(bounds[:-1], bounds[1:]))
    if workers == 1:
        run(spans[0])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, spans))
    return idx


def _load_map(path) -> "kitti.FeatureMap":
    head = Path(path).read_bytes()[:4]
    if head[:4] == kitti.FEATUREMAP_MAGIC:
        return kitti.read_feature_map(path)
    if head[:2] == b"P5":
        return kitti.read_pgm_mask(path)
    raise kitti.FormatError(f"{path}: neither a PACF container nor a P5 PGM")


def _prepare_cloud(args, calib, image_size) -> PointCloud:
    """ROI crop, then camera-frustum filter, then seeded subsampling."""
    cloud = kitti.read_velodyne(args.velodyne)
    roi = _parse_roi(args.roi)
    cloud, _ = geometry.filter_region(cloud, roi)
    pixels = geometry.project_points(cloud, calib, image_size)
    visible = np.nonzero(pixels.valid)[0]
    if len(visible):
        cloud = PointCloud(
            xyz=cloud.xyz[visible],
            reflectance=cloud.reflectance[visible],
            features=None if cloud.features is None else cloud.features[visible],
        )
    cloud, _ = geometry.subsample(cloud, args.n_sample, args.seed)
    return cloud


def _parse_roi(text: str | None) -> geometry.RegionOfInterest:
    if not text:
        return geometry.RegionOfInterest()
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 6:
        raise argparse.ArgumentTypeError("--roi needs x0,x1,y0,y1,z0,z1")
    return geometry.RegionOfInterest(*vals)


def cmd_project(args) -> int:
    cloud = kitti.read_velodyne(args.velodyne)
    calib = kitti.read_calib(args.calib)
    pixels = geometry.project_points(cloud, calib, (args.height, args.width))
    print("index,u,v,depth,valid")
    for i in range(len(pixels)):
        print(f"{i},{pixels.u[i]:.6f},{pixels.v[i]:.6f},{pixels.depth[i]:.6f},{int(pixels.valid[i])}")
    return EXIT_OK


def cmd_knn(args) -> int:
    cloud = kitti.read_velodyne(args.velodyne)
    tree = kdtree.KdTree(cloud.xyz)
    idx = _batch_knn(tree, cloud.xyz, args.k, args.dist)
    print("index," + ",".join(f"n{j}" for j in range(args.k)))
    for i in range(len(cloud)):
        print(f"{i}," + ",".join(str(int(v)) for v in idx[i]))
    if args.verify:
        mismatches = 0
        for i in range(len(cloud)):
            oracle = kdtree.knn_brute(cloud.xyz, cloud.xyz[i], args.k, args.dist)
            if not np.array_equal(oracle.indices, idx[i]):
                mismatches += 1
                print(f"MISMATCH at {i}: tree {idx[i].tolist()} vs brute {oracle.indices.tolist()}", file=sys.stderr)
        if mismatches:
            return EXIT_VERIFY
        print(f"# verified {len(cloud)} queries against brute force", file=sys.stderr)
    return EXIT_OK


def cmd_fuse(args) -> int:
    calib = kitti.read_calib(args.calib)
    fmap = _load_map(args.featuremap)
    cloud = _prepare_cloud(args, calib, (fmap.height, fmap.width))
    if args.params:
        params = fusion.load_params(args.params)
    else:
        c_lidar = cloud.c_lidar
        d_i = fmap.channels + c_lidar + 3
        widths = args.mlp or fusion.MlpSpec.default(d_i, args.dout).widths
        params = fusion.init_params(fusion.MlpSpec(widths=tuple(widths)), args.k, seed=args.seed)
    fused = fusion.fuse_cloud(
        cloud, fmap, calib, params, k=args.k, d=args.dist, mode=args.mode
    )
    out = kitti.FeatureMap(data=fused.features[:, None, :])
    kitti.write_feature_map(out, args.out)
    print(f"wrote {len(fused.features)} rows of width {fused.features.shape[1]} to {args.out}")
    return EXIT_OK


def cmd_maskgen(args) -> int:
    calib = kitti.read_calib(args.calib)
    boxes = kitti.read_labels(args.labels)
    image_size = (args.height, args.width)
    args_ns = args
    cloud = _prepare_cloud(args_ns, calib, image_size)
    fg = losses.label_points(cloud, boxes, calib)
    mask = losses.make_sparse_mask(cloud, fg, calib, image_size)
    mask.to_pgm(args.out_mask)
    with open(args.out_labels, "w") as fh:
        fh.write("index,x,y,z,foreground\n")
        for i in range(len(cloud)):
            x, y, z = cloud.xyz[i]
            fh.write(f"{i},{x:.6f},{y:.6f},{z:.6f},{int(fg[i])}\n")
    n_sup = int(mask.supervised.sum())
    print(f"mask {args.width}x{args.height}: {n_sup} supervised pixels, {int(fg.sum())} foreground points")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import check_focal_gradients, check_pacf_gradients

    pacf_err = check_pacf_gradients(n_instances=args.instances, seed=args.seed)
    focal_err = check_focal_gradients(n_instances=args.instances, seed=args.seed)
    print(f"pacf max relative gradient error: {pacf_err:.3e}")
    print(f"focal max relative gradient error: {focal_err:.3e}")
    ok = pacf_err < 1e-4 and focal_err < 1e-4
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_bev_render(args) -> int:
    calib = kitti.read_calib(args.calib)
    fmap = _load_map(args.featuremap)
    cloud = kitti.read_velodyne(args.velodyne)
    roi = _parse_roi(args.roi)
    cloud, _ = geometry.filter_region(cloud, roi)
    pixels = geometry.project_points(cloud, calib, (fmap.height, fmap.width))
    semantic, _ = fusion.retrieve_features(pixels, fmap)
    values = semantic[:, 0]

    h = int(round((roi.x_max - roi.x_min) / BEV_RESOLUTION))
    w = int(round((roi.y_max - roi.y_min) / BEV_RESOLUTION))
    img = np.zeros((h, w, 3), dtype=np.uint8)
    rows = np.clip(((roi.x_max - cloud.xyz[:, 0]) / BEV_RESOLUTION).astype(int), 0, h - 1)
    cols = np.clip(((roi.y_max - cloud.xyz[:, 1]) / BEV_RESOLUTION).astype(int), 0, w - 1)
    vmax = values.max() if len(values) and values.max() > 0 else 1.0
    shade = np.clip(values / vmax, 0.0, 1.0)
    # iterate in index order so collisions resolve deterministically
    for i in range(len(cloud)):
        img[rows[i], cols[i]] = (int(255 * shade[i]), 64, int(255 * (1 - shade[i])))
    Path(args.out).write_bytes(f"P6\n{w} {h}\n255\n".encode() + img.tobytes())
    print(f"wrote {w}x{h} BEV render to {args.out}")
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--dist", type=float, default=np.inf)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--roi", type=str, default=None, help="x0,x1,y0,y1,z0,z1")
    p.add_argument("--n-sample", type=int, default=16384)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pacfusion", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="project a velodyne scan onto the image plane (CSV)")
    p.add_argument("velodyne")
    p.add_argument("calib")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("knn", help="neighbor table, optionally verified against brute force")
    p.add_argument("velodyne")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--dist", type=float, default=np.inf)
    p.add_argument("--verify", action="store_true")
    p.set_defaults(func=cmd_knn)

    p = sub.add_parser("fuse", help="run the fusion operator over a frame")
    p.add_argument("velodyne")
    p.add_argument("calib")
    p.add_argument("featuremap")
    p.add_argument("--params", default=None, help="PACW checkpoint; random init if omitted")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["v1", "v2"], default="v1")
    p.add_argument("--dout", type=int, default=8)
    p.add_argument("--mlp", type=lambda s: tuple(int(v) for v in s.split(",")), default=None)
    _add_common(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("maskgen", help="sparse mask PGM + per-point label CSV")
    p.add_argument("velodyne")
    p.add_argument("calib")
    p.add_argument("labels")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--out-mask", dest="out_mask", required=True)
    p.add_argument("--out-labels", dest="out_labels", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_maskgen)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=20)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bev-render", help="top-down PPM colored by retrieved semantics")
    p.add_argument("velodyne")
    p.add_argument("calib")
    p.add_argument("featuremap")
    p.add_argument("--out", required=True)
    p.add_argument("--roi", type=str, default=None)
    p.set_defaults(func=cmd_bev_render)

    # loss knobs accepted everywhere they make sense
    for sp in sub.choices.values():
        sp.add_argument("--alpha", type=float, default=0.25)
        sp.add_argument("--gamma", type=float, default=2.0)
        sp.add_argument("--lambda", dest="lam", type=float, default=1.0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except kitti.FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
