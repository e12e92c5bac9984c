"""Command line: train | scan | merge | serve.

Exit codes: 0 ok, 2 usage/validation, 3 firmware fault, 4 data mismatch.
All file writes go through a temp file + rename so an interrupted run
never leaves a torn image or map behind.
"""
from __future__ import annotations

import argparse
import os
import sys
import tempfile
from typing import Optional

from . import ann, mapping
from .firmware import PHASE_READY
from .sensor import CatalogError, get_sensor
from .session import SessionError, default_session_path, load_session

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FAULT = 3
EXIT_MISMATCH = 4


def atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".emr-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_geometry(text: str) -> ann.NetGeometry:
    try:
        widths = tuple(int(part) for part in text.split(","))
        return ann.NetGeometry(widths).check_adc()
    except (ValueError, ann.GeometryError) as e:
        raise argparse.ArgumentTypeError(str(e))


def cmd_train(args) -> int:
    try:
        spec = get_sensor(args.sensor, args.catalog)
    except CatalogError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    ts = ann.generate_training_data(spec, resolution=args.resolution)
    print(f"{spec.model}: {len(ts.class_counts)} classes over 1024 codes "
          f"(class 0: {ts.class_counts.get(0, 0)} codes)")
    w, history = ann.train(ts, args.geometry, eta=args.eta,
                           epochs=args.epochs, seed=args.seed)
    stride = max(1, len(history) // 20)
    for i in range(0, len(history), stride):
        print(f"  epoch {i + 1:>6}: {history[i]} bit errors")
    if (len(history) - 1) % stride:
        print(f"  epoch {len(history):>6}: {history[-1]} bit errors")
    pred = ann.classify_all(w)
    accuracy = float((pred == ts.classes).mean())
    converged = history[-1] == 0
    print(f"trained {len(history)} epochs, final bit errors {history[-1]}, "
          f"exact-class accuracy {accuracy:.4f}")
    image = ann.serialize_weights(w)
    if not converged:
        image += bytes((ann.PARTIAL_MARKER,))
        print("warning: not converged; image carries the partial marker byte",
              file=sys.stderr)
    atomic_write(args.out, image)
    print(f"wrote {len(image)} bytes to {args.out}")
    return EXIT_OK if converged else 1


def cmd_scan(args) -> int:
    try:
        sess = load_session(args.session)
    except SessionError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    module = sess.boot()
    if module.phase != PHASE_READY:
        print("firmware fault during boot:", file=sys.stderr)
        for line in module.log:
            print(f"  {line}", file=sys.stderr)
        return EXIT_FAULT
    head = module.motors[0]
    head.enabled = True
    try:
        lmap, elapsed = module.scan(sess.scene, sess.pose, module.scan_config)
    except Exception as e:
        print(f"firmware fault during scan: {e}", file=sys.stderr)
        return EXIT_FAULT
    atomic_write(args.out + ".bin", mapping.local_to_binary(lmap))
    atomic_write(args.out + ".pbm", mapping.local_to_pbm(lmap).encode())
    print(f"scan complete: {len(lmap.cells)} cells, {elapsed:.2f} s simulated")
    print(f"wrote {args.out}.bin and {args.out}.pbm")
    return EXIT_OK


def cmd_merge(args) -> int:
    try:
        with open(args.local, "rb") as f:
            lmap = mapping.local_from_binary(f.read(), raster_cm=args.raster)
    except (OSError, mapping.MapError) as e:
        print(f"error reading local map: {e}", file=sys.stderr)
        return EXIT_USAGE
    if os.path.exists(args.global_map):
        try:
            with open(args.global_map, "rb") as f:
                gmap = mapping.global_from_binary(f.read())
        except (OSError, mapping.MapError) as e:
            print(f"error reading global map: {e}", file=sys.stderr)
            return EXIT_USAGE
    else:
        gmap = mapping.GlobalMap(raster_cm=lmap.raster_cm)
    fix = mapping.RobotFix(heading_deg=args.alpha, dx=args.dx, dy=args.dy)
    try:
        mapping.merge(gmap, lmap, fix)
    except mapping.MapError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISMATCH
    atomic_write(args.global_map, mapping.global_to_binary(gmap))
    print(f"merged {len(lmap.cells)} local cells; global now {len(gmap.cells)} cells")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    try:
        sess = load_session(args.session)
    except SessionError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    host, _, port = args.bind.partition(":")
    app = create_app(sess)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emr", description="IR environment-scanner module simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="generate training data, train, write a weight image")
    p.add_argument("--sensor", required=True, help="catalog model name")
    p.add_argument("--geometry", type=_parse_geometry,
                   default=ann.NetGeometry.for_adc(), help="layer widths, e.g. 10,16,8")
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--epochs", type=_positive_int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=float, default=1.0, help="class size in cm")
    p.add_argument("--catalog", default=None, help="sensor catalog path "
                   "(default: bundled, or EMR_SENSOR_CATALOG)")
    p.add_argument("--out", required=True, help="output weight image path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("scan", help="boot the module, run one scan, write the map")
    p.add_argument("--session", default=default_session_path())
    p.add_argument("--out", required=True, help="output path stem (.bin/.pbm appended)")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("merge", help="merge a local map into a global map file")
    p.add_argument("--global", dest="global_map", required=True,
                   help="global map file (created when missing)")
    p.add_argument("--local", required=True, help="local map .bin file")
    p.add_argument("--alpha", type=float, default=0.0, help="compass heading, degrees")
    p.add_argument("--dx", type=int, default=0, help="odometry x displacement, cells")
    p.add_argument("--dy", type=int, default=0, help="odometry y displacement, cells")
    p.add_argument("--raster", type=float, default=1.0, help="local map raster, cm")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("serve", help="run the HTTP service around one module")
    p.add_argument("--session", default=default_session_path())
    p.add_argument("--bind", default="127.0.0.1:8000")
    p.set_defaults(func=cmd_serve)
    return parser


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
