"""Session documents: everything one scanner run needs, in one JSON file.

Paths inside a session resolve relative to the session file itself, so
the packaged default session can reference the bundled scene and weight
image. Channel numbers in session files use the protocol's 1..32
numbering; internally channels are 0-based.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from importlib import resources
from typing import Optional

from . import motion
from .firmware import Firmware, FirmwareConfig
from .mapping import ScanConfig
from .sensor import SensorSpec, get_sensor
from .world import Pose, Scene, load_scene


class SessionError(ValueError):
    pass


@dataclass
class Session:
    """Parsed session: scene, pose, firmware wiring and the weight image."""

    scene: Scene
    pose: Pose
    config: FirmwareConfig
    eeprom_image: bytes
    sensor_model: str
    scene_path: str
    eeprom_path: str

    def boot(self) -> Firmware:
        return Firmware(self.eeprom_image, self.config)


def default_session_path() -> str:
    return str(resources.files("emr").joinpath("data/session.json"))


def _resolve(base_dir: str, path: str) -> str:
    if os.path.isabs(path):
        return path
    return os.path.normpath(os.path.join(base_dir, path))


def load_session(path: Optional[str] = None) -> Session:
    """Read and validate a session file; all referenced files must parse."""
    path = path or default_session_path()
    base = os.path.dirname(os.path.abspath(path))
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as e:
        raise SessionError(f"cannot read session {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise SessionError(f"session parse error at line {e.lineno}: {e.msg}") from e

    for key in ("scene", "sensor", "eeprom", "motors", "scan"):
        if key not in doc:
            raise SessionError(f"session is missing {key!r}")

    scene_path = _resolve(base, doc["scene"])
    try:
        with open(scene_path, encoding="utf-8") as f:
            scene = load_scene(f.read())
    except OSError as e:
        raise SessionError(f"cannot read scene {scene_path}: {e}") from e

    pose_doc = doc.get("pose", {})
    pose = Pose(x=float(pose_doc.get("x", 0.0)), y=float(pose_doc.get("y", 0.0)),
                heading=float(pose_doc.get("heading", 0.0)))

    sensor_model = doc["sensor"]
    catalog_path = doc.get("catalog")
    if catalog_path:
        catalog_path = _resolve(base, catalog_path)
    spec = get_sensor(sensor_model, catalog_path)

    eeprom_path = _resolve(base, doc["eeprom"])
    try:
        with open(eeprom_path, "rb") as f:
            image = f.read()
    except OSError as e:
        raise SessionError(f"cannot read weight image {eeprom_path}: {e}") from e

    motors = [motion.parse_motor_config(m) for m in doc["motors"]]
    if not 1 <= len(motors) <= 2:
        raise SessionError("session must define one or two motors")

    s = doc["scan"]
    scan = ScanConfig(
        sweep_deg=float(s["sweep_deg"]),
        segment_deg=float(s["segment_deg"]),
        raster_cm=float(s.get("raster_cm", 1.0)),
        sensor_max_cm=float(s.get("sensor_max_cm", spec.max_range_cm)),
    )

    head = int(doc.get("head_channel", 1)) - 1
    fixed = tuple(int(c) - 1 for c in doc.get("fixed_channels", []))
    sensors: dict[int, SensorSpec] = {head: spec}
    for ch in fixed:
        sensors[ch] = spec

    config = FirmwareConfig(
        motors=motors,
        head_channel=head,
        fixed_channels=fixed,
        sensors=sensors,
        scan=scan,
        noise_sigma=float(doc.get("noise_sigma", 0.0)),
        seed=doc.get("seed", 0),
        watchdog_interval_s=float(doc.get("watchdog_interval_s", 30.0)),
        address=int(doc.get("address", 0x28)),
    )
    return Session(scene=scene, pose=pose, config=config, eeprom_image=image,
                   sensor_model=sensor_model, scene_path=scene_path,
                   eeprom_path=eeprom_path)
