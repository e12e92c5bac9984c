"""Simulated 2D environment: obstacle segments and ray casting.

World coordinates are centimeters. Heading/azimuth convention: 0 deg is
world north (+y), positive angles turn clockwise, so a ray at angle a
travels along (sin a, cos a). Scenes are immutable once built and safe
to share between concurrent readers.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

_EPS = 1e-12


class SceneError(ValueError):
    """Malformed scene document or invalid geometry."""


def normalize_angle(deg: float) -> float:
    """Fold an angle into (-180, 180]."""
    a = deg % 360.0
    if a > 180.0:
        a -= 360.0
    return a


@dataclass(frozen=True)
class Pose:
    """Sensor position (cm) and heading (deg, 0 = north, clockwise positive)."""

    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_angle(self.heading))


@dataclass(frozen=True)
class Scene:
    """Obstacle line segments inside an axis-aligned bounding rectangle."""

    segments: tuple[tuple[float, float, float, float], ...]
    bounds: tuple[float, float, float, float]

    def __post_init__(self):
        x0, y0, x1, y1 = self.bounds
        if not (x0 < x1 and y0 < y1):
            raise SceneError(f"degenerate bounds {self.bounds}")
        for i, (ax, ay, bx, by) in enumerate(self.segments):
            if ax == bx and ay == by:
                raise SceneError(f"segment {i} has zero length: ({ax}, {ay})")
            for px, py in ((ax, ay), (bx, by)):
                if not (x0 <= px <= x1 and y0 <= py <= y1):
                    raise SceneError(
                        f"segment {i} endpoint ({px}, {py}) outside bounds {self.bounds}")

    @property
    def diagonal(self) -> float:
        x0, y0, x1, y1 = self.bounds
        return math.hypot(x1 - x0, y1 - y0)


def load_scene(text: str) -> Scene:
    """Parse a scene document.

    Format: {"bounds": [x0, y0, x1, y1], "segments": [[ax, ay, bx, by], ...]},
    all values in cm.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneError(f"scene parse error at line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict) or "bounds" not in doc or "segments" not in doc:
        raise SceneError("scene document needs 'bounds' and 'segments'")
    bounds = doc["bounds"]
    if not (isinstance(bounds, list) and len(bounds) == 4
            and all(isinstance(v, (int, float)) for v in bounds)):
        raise SceneError(f"bounds must be four numbers, got {bounds!r}")
    segments = []
    for i, seg in enumerate(doc["segments"]):
        if not (isinstance(seg, list) and len(seg) == 4
                and all(isinstance(v, (int, float)) for v in seg)):
            raise SceneError(f"segment {i} must be four numbers, got {seg!r}")
        segments.append(tuple(float(v) for v in seg))
    return Scene(segments=tuple(segments), bounds=tuple(float(v) for v in bounds))


def _ray_segment_distance(ox: float, oy: float, dx: float, dy: float,
                          seg: tuple[float, float, float, float]) -> Optional[float]:
    """Smallest positive ray parameter t hitting the segment, or None."""
    ax, ay, bx, by = seg
    ex, ey = bx - ax, by - ay
    denom = dx * ey - dy * ex
    wx, wy = ax - ox, ay - oy
    if abs(denom) < _EPS:
        # parallel; collinear rays can still run into an endpoint
        if abs(wx * dy - wy * dx) > 1e-9:
            return None
        ta = wx * dx + wy * dy
        tb = (bx - ox) * dx + (by - oy) * dy
        hits = [t for t in (ta, tb) if t > _EPS]
        return min(hits) if hits else None
    t = (wx * ey - wy * ex) / denom
    s = (wx * dy - wy * dx) / denom
    if t > _EPS and -1e-12 <= s <= 1.0 + 1e-12:
        return t
    return None


def ray_cast(scene: Scene, pose: Pose, azimuth: float) -> Optional[float]:
    """Distance (cm) to the nearest obstacle along pose.heading + azimuth.

    Returns None on a miss. Ties where the ray passes through a shared
    segment endpoint collapse to the single minimum distance.
    """
    angle = math.radians(pose.heading + normalize_angle(azimuth))
    dx, dy = math.sin(angle), math.cos(angle)
    best: Optional[float] = None
    for seg in scene.segments:
        t = _ray_segment_distance(pose.x, pose.y, dx, dy, seg)
        if t is not None and (best is None or t < best):
            best = t
    return best
