"""Command-line front end: gen / build / validate / select / info.

Exit codes: 0 ok, 1 usage or I/O error, 2 internal invariant violation,
3 validation failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import checks, codec, ingest, sampling, traversal
from .errors import ConsistencyError, FormatError
from .partition import partition as partition_cloud
from .model import BuildConfig, STRATEGIES


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parse_vec3(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise _UsageError(f"expected x,y,z triple, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise _UsageError(f"expected numeric triple, got {text!r}")


def _parse_viewport(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        w, h = int(w), int(h)
    except ValueError:
        raise _UsageError(f"expected WxH viewport, got {text!r}")
    if w < 1 or h < 1:
        raise _UsageError("viewport must be at least 1x1")
    return w, h


def _default_threads() -> int:
    env = os.environ.get("LODFORGE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _read_cloud(path: str) -> ingest.PointCloud:
    lower = path.lower()
    if lower.endswith(".las"):
        return ingest.read_las(path)
    return ingest.read_ply(path)


def _emit(obj: dict, pretty: bool) -> None:
    if pretty:
        print(json.dumps(obj, indent=2, sort_keys=True))
    else:
        print(json.dumps(obj, sort_keys=True, separators=(",", ":")))


PRESET_KINDS = {
    "uniform": "uniform-cube",
    "plane": "checker-plane",
    "stadium": "stadium",
    "two-scans": "two-scans",
}


def cmd_gen(args) -> int:
    if args.preset not in PRESET_KINDS:
        raise _UsageError(f"invalid preset: {args.preset}")
    if args.count < 1:
        raise _UsageError("--count must be >= 1")
    cloud = ingest.generate(ingest.GeneratorPreset(PRESET_KINDS[args.preset], args.count, args.seed))
    ingest.write_ply(args.output, cloud)
    _emit({"points": len(cloud), "output": args.output}, args.pretty)
    return 0


def cmd_build(args) -> int:
    if args.strategy not in STRATEGIES:
        raise _UsageError(f"unknown strategy: {args.strategy} (choose from {', '.join(STRATEGIES)})")
    if args.threshold < 1:
        raise _UsageError("--threshold must be >= 1")
    config = BuildConfig(
        T=args.threshold, max_depth=args.max_depth, strategy=args.strategy, seed=args.seed
    )
    cloud = _read_cloud(args.input)
    if len(cloud) == 0:
        raise _UsageError(f"input {args.input} contains no points")

    t0 = time.perf_counter()
    tree = partition_cloud(cloud, config)
    t1 = time.perf_counter()
    sampling.build_lod(tree)
    t2 = time.perf_counter()

    results = checks.run_checks(tree, expected_points=len(cloud))
    if not checks.all_passed(results):
        for r in results:
            if not r.passed:
                print(f"invariant violated: {r.name}: {r.detail}", file=sys.stderr)
        return 2

    codec.encode(tree, args.output)
    leaves = tree.leaves()
    build_s = t2 - t0
    _emit(
        {
            "points": len(cloud),
            "nodes": tree.node_count,
            "leaves": len(leaves),
            "innerNodes": tree.node_count - len(leaves),
            "maxDepth": max(n.depth for n in leaves),
            "buildSeconds": round(build_s, 4),
            "throughputMPs": round(len(cloud) / build_s / 1e6, 3),
            "splitSeconds": round(t1 - t0, 4),
            "voxelizeSeconds": round(t2 - t1, 4),
        },
        args.pretty,
    )
    return 0


def cmd_validate(args) -> int:
    tree = codec.decode(args.input)
    with open(args.input, "rb") as f:
        expected = codec.read_header(f.read(128))["pointCount"]
    results = checks.run_checks(tree, expected_points=expected)
    _emit(
        {
            "file": args.input,
            "checks": [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results],
            "passed": checks.all_passed(results),
        },
        args.pretty,
    )
    return 0 if checks.all_passed(results) else 3


def cmd_select(args) -> int:
    tree = codec.decode(args.input)
    w, h = _parse_viewport(args.viewport)
    camera = traversal.Camera(
        eye=_parse_vec3(args.eye),
        look_at=_parse_vec3(args.look_at),
        up=_parse_vec3(args.up),
        fov_y=args.fovy,
        viewport_w=w,
        viewport_h=h,
        near=args.near,
        far=args.far,
    )
    result = traversal.select(tree, camera, args.threshold_px)
    out = {"frame": args.frame}
    out.update(result.to_dict())
    _emit(out, args.pretty)
    return 0


def cmd_info(args) -> int:
    with open(args.input, "rb") as f:
        data = f.read()
    header = codec.read_header(data)
    tree = codec.decode(args.input)
    depths: dict[int, dict[str, int]] = {}
    for node in tree.iter_nodes():
        d = depths.setdefault(node.depth, {"nodes": 0, "points": 0, "voxels": 0})
        d["nodes"] += 1
        d["points"] += node.point_count
        d["voxels"] += node.voxel_count
    _emit(
        {
            "header": {k: list(v) if isinstance(v, tuple) else v for k, v in header.items()},
            "depths": {str(k): depths[k] for k in sorted(depths)},
        },
        args.pretty,
    )
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="lodforge", description="Point cloud LOD construction toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic point cloud as binary PLY")
    p.add_argument("--preset", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("build", help="partition, voxelize and write a VLPC file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--strategy", default="first-come")
    p.add_argument("--threshold", type=int, default=50_000, help="max points per leaf (T)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-depth", type=int, default=16)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("validate", help="run the invariant suite on a VLPC file")
    p.add_argument("input")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("select", help="headless LOD selection for one camera frame")
    p.add_argument("input")
    p.add_argument("--eye", required=True)
    p.add_argument("--look-at", required=True)
    p.add_argument("--up", default="0,0,1")
    p.add_argument("--fovy", type=float, default=60.0)
    p.add_argument("--viewport", default="1920x1080")
    p.add_argument("--near", type=float, default=0.1)
    p.add_argument("--far", type=float, default=1e6)
    p.add_argument("--threshold-px", type=float, default=traversal.DEFAULT_THRESHOLD_PX)
    p.add_argument("--frame", type=int, default=0)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("info", help="print header and per-depth histograms")
    p.add_argument("input")
    p.set_defaults(func=cmd_info)

    for sp in sub.choices.values():
        sp.add_argument("--pretty", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", None) is None and hasattr(args, "threads"):
            args.threads = _default_threads()  # accepted for interface parity
        return args.func(args)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (FormatError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ConsistencyError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
