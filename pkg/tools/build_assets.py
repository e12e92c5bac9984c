#!/usr/bin/env python3
"""Regenerate the bundled weight image and the console conformance fixtures.

Run from the repository root:

    python3 tools/build_assets.py

Everything written here is deterministic, so the checked-in artifacts can
always be reproduced bit for bit.
"""
import json
import os
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(ROOT, "src"))

from emr import ann, mapping, protocol  # noqa: E402
from emr.sensor import get_sensor  # noqa: E402
from emr.session import load_session  # noqa: E402


def build_eeprom() -> str:
    spec = get_sensor("GP2D120")
    w = ann.synthesize_weights(spec, resolution=1.0)
    image = ann.serialize_weights(w)
    path = os.path.join(ROOT, "src", "emr", "data", "gp2d120-net.eeprom")
    with open(path, "wb") as f:
        f.write(image)
    print(f"wrote {path} ({len(image)} bytes, geometry {w.geometry.widths})")
    return path


def build_conformance_fixtures() -> str:
    sess = load_session()
    module = sess.boot()
    module.motors[0].enabled = True
    address = sess.config.address

    triples = []
    samples: dict[str, str] = {}
    for cmd in protocol.all_commands():
        payload = protocol.encode(cmd)
        wire = protocol.frame(payload, address)
        key = type(cmd).__name__
        entry = {
            "command": protocol.describe(cmd),
            "kind": key,
            "payload_hex": payload.hex(),
            "frame_hex": wire.hex(),
        }
        if isinstance(cmd, (protocol.QueryAdc, protocol.QueryDistance)):
            entry["channel"] = cmd.channel
        elif isinstance(cmd, protocol.Motor):
            entry["motor"] = cmd.motor
            entry["action"] = cmd.action.value
        if key not in samples:
            reply = module.execute(protocol.decode(payload), sess.scene, sess.pose)
            entry["sample_response_hex"] = reply.hex()
            samples[key] = reply.hex()
        triples.append(entry)

    # full-circle scan reply for the map-view snapshot test (all four walls)
    module2 = sess.boot()
    module2.motors[0].enabled = True
    module2.scan_config = mapping.ScanConfig(
        360.0, sess.config.scan.segment_deg, sess.config.scan.raster_cm,
        sess.config.scan.sensor_max_cm)
    scan_reply = module2.execute(protocol.LocalScan(), sess.scene, sess.pose)

    doc = {
        "address": address,
        "commands": triples,
        "scan_response_hex": scan_reply.hex(),
        "scan_config": {
            "sweep_deg": module2.scan_config.sweep_deg,
            "segment_deg": module2.scan_config.segment_deg,
            "raster_cm": module2.scan_config.raster_cm,
            "sensor_max_cm": module2.scan_config.sensor_max_cm,
        },
    }
    out_dir = os.path.join(ROOT, "frontend", "fixtures")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "conformance.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")
    ok, payload = protocol.parse_response(bytes.fromhex(doc["scan_response_hex"]))
    lmap = mapping.local_from_binary(payload)
    print(f"wrote {path} ({len(triples)} commands, scan map {len(lmap.cells)} cells)")
    return path


if __name__ == "__main__":
    build_eeprom()
    build_conformance_fixtures()
