"""Occupancy maps: local scan rasters and global fusion.

A local map is the bit raster of one scan, origin shifted so all cell
indices are non-negative; the scan-head axis sits at cell
(l_mmax/l_r, l_mmax/l_r). Global maps grow monotonically as rotated and
translated local maps are OR-ed in. Cell math follows the degree
convention of the world module (x = sin, y = cos).
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

_MAP_MAGIC = b"EMRM"
_GLOBAL_MAGIC = b"EMRG"


class MapError(ValueError):
    """Raster mismatch, bad geometry or malformed map bytes."""


def _round_half_away(x: float) -> int:
    if x >= 0:
        return int(math.floor(x + 0.5))
    return int(math.ceil(x - 0.5))


# ---------------------------------------------------------------------------
# scan configuration and timing/storage estimators

@dataclass(frozen=True)
class ScanConfig:
    """Sweep geometry: total sweep, per-measurement segment, raster, range."""

    sweep_deg: float
    segment_deg: float
    raster_cm: float
    sensor_max_cm: float

    def __post_init__(self):
        if not (0 < self.segment_deg <= 360.0):
            raise MapError(f"segment_deg must be in (0, 360], got {self.segment_deg}")
        if not (0 <= self.sweep_deg <= 360.0):
            raise MapError(f"sweep_deg must be in [0, 360], got {self.sweep_deg}")
        if self.sweep_deg and self.segment_deg > self.sweep_deg:
            raise MapError("segment_deg cannot exceed sweep_deg")
        n = self.sweep_deg / self.segment_deg
        if abs(n - round(n)) > 1e-9:
            raise MapError(
                f"sweep {self.sweep_deg} is not a whole number of {self.segment_deg} segments")
        if self.raster_cm <= 0 or self.sensor_max_cm <= 0:
            raise MapError("raster_cm and sensor_max_cm must be positive")

    @property
    def measurement_count(self) -> int:
        return int(round(self.sweep_deg / self.segment_deg))


def measurement_duration(cfg: ScanConfig) -> float:
    """Estimated scan duration in seconds: sweep * (0.06/segment + 0.0425).

    0.05 s mechanical delay plus 0.01 s conversion per segment, and
    ramp-assisted approach/return legs of 0.02125 s per sweep degree each.
    """
    return cfg.sweep_deg * (0.06 / cfg.segment_deg + 0.0425)


def storage_bits(l_m: float, l_r: float) -> int:
    """Bits needed for a square raster covering radius l_m at cell size l_r."""
    if l_r <= 0:
        raise MapError("raster must be positive")
    side = 2.0 * l_m / l_r
    if abs(side - round(side)) > 1e-9:
        raise MapError(f"raster {l_r} does not divide map extent {2 * l_m}")
    return int(round(side)) ** 2


def raster_offsets(alpha_deg: float, l_m: float, l_r: float) -> tuple[int, int]:
    """Rasterized x/y offsets of a hit at angle alpha and distance l_m."""
    a = math.radians(alpha_deg)
    return (_round_half_away(math.sin(a) * l_m / l_r),
            _round_half_away(math.cos(a) * l_m / l_r))


# ---------------------------------------------------------------------------
# local map

@dataclass
class LocalMap:
    """One scan's occupancy raster.

    Cells are stored sparsely; the square frame (side x side, one bit per
    cell) is materialized on export. Rotation may push cells past the
    frame edge; such cells are kept in memory and clipped only on export.
    """

    side: int
    raster_cm: float
    cells: set = field(default_factory=set)

    def __post_init__(self):
        if self.side <= 0 or self.side % 2:
            raise MapError(f"side must be a positive even cell count, got {self.side}")

    @classmethod
    def for_range(cls, sensor_max_cm: float, raster_cm: float) -> "LocalMap":
        side = 2.0 * sensor_max_cm / raster_cm
        if abs(side - round(side)) > 1e-9:
            raise MapError(
                f"raster {raster_cm} does not divide map extent {2 * sensor_max_cm}")
        return cls(side=int(round(side)), raster_cm=raster_cm)

    @classmethod
    def for_config(cls, cfg: ScanConfig) -> "LocalMap":
        return cls.for_range(cfg.sensor_max_cm, cfg.raster_cm)

    @property
    def origin(self) -> tuple[int, int]:
        return self.side // 2, self.side // 2

    @property
    def sensor_max_cm(self) -> float:
        return self.side / 2 * self.raster_cm

    def grid(self) -> list[list[int]]:
        """Dense frame, clipped to [0, side); grid[x][y], y up."""
        g = [[0] * self.side for _ in range(self.side)]
        for x, y in self.cells:
            if 0 <= x < self.side and 0 <= y < self.side:
                g[x][y] = 1
        return g


def plot_point(lmap: LocalMap, alpha_deg: float, l_m: float) -> LocalMap:
    """Mark the obstacle hit at head angle alpha and measured distance l_m.

    Cell = ((l_mmax + sin a * l_m)/l_r, (l_mmax + cos a * l_m)/l_r), rounded.
    l_m = 0 means no echo and leaves the map unchanged; the exact-boundary
    hit (l_m = l_mmax straight along an axis) lands on the fencepost index
    `side` and is clamped into the frame.
    """
    if l_m == 0:
        return lmap
    l_mmax = lmap.sensor_max_cm
    if l_m < 0 or l_m > l_mmax:
        raise MapError(f"distance {l_m} outside (0, {l_mmax}]")
    if not -180.0 <= alpha_deg <= 180.0:
        raise MapError(f"angle {alpha_deg} outside [-180, 180]")
    a = math.radians(alpha_deg)
    x = _round_half_away((l_mmax + math.sin(a) * l_m) / lmap.raster_cm)
    y = _round_half_away((l_mmax + math.cos(a) * l_m) / lmap.raster_cm)
    x = min(max(x, 0), lmap.side - 1)
    y = min(max(y, 0), lmap.side - 1)
    lmap.cells.add((x, y))
    return lmap


def rotate_to_north(lmap: LocalMap, alpha_deg: float) -> LocalMap:
    """Rotate all cells about the map origin by the compass angle alpha.

    Forward-maps every set cell through the rotation matrix
    [[cos, sin], [-sin, cos]]; collisions OR together.
    """
    a = math.radians(alpha_deg)
    ca, sa = math.cos(a), math.sin(a)
    ox, oy = lmap.origin
    out = LocalMap(side=lmap.side, raster_cm=lmap.raster_cm)
    for cx, cy in lmap.cells:
        x, y = cx - ox, cy - oy
        xr = ca * x + sa * y
        yr = -sa * x + ca * y
        out.cells.add((_round_half_away(xr) + ox, _round_half_away(yr) + oy))
    return out


# ---------------------------------------------------------------------------
# global map

@dataclass(frozen=True)
class RobotFix:
    """Compass heading (deg vs global north) and odometry cell displacement."""

    heading_deg: float
    dx: int
    dy: int

    def __post_init__(self):
        a = self.heading_deg % 360.0
        if a > 180.0:
            a -= 360.0
        object.__setattr__(self, "heading_deg", a)


@dataclass
class GlobalMap:
    """Growable world grid; merged obstacle cells are never removed."""

    raster_cm: float
    cells: set = field(default_factory=set)

    def __post_init__(self):
        if self.raster_cm <= 0:
            raise MapError("raster must be positive")


def composite_matrix(alpha_deg: float, dx: float, dy: float) -> list[list[float]]:
    """Homogeneous local->global transform: rotation then translation."""
    a = math.radians(alpha_deg)
    ca, sa = math.cos(a), math.sin(a)
    return [[ca, sa, float(dx)], [-sa, ca, float(dy)], [0.0, 0.0, 1.0]]


def rotation_matrix(alpha_deg: float) -> list[list[float]]:
    return composite_matrix(alpha_deg, 0.0, 0.0)


def translation_matrix(dx: float, dy: float) -> list[list[float]]:
    return composite_matrix(0.0, dx, dy)


def mat_mul(a: list[list[float]], b: list[list[float]]) -> list[list[float]]:
    return [[sum(a[i][k] * b[k][j] for k in range(3)) for j in range(3)] for i in range(3)]


def merge(gmap: GlobalMap, lmap: LocalMap, fix: RobotFix) -> GlobalMap:
    """OR the local map into the global grid under the composite transform.

    Each set local cell, taken relative to the local origin, is rotated by
    the fix heading and shifted by the odometry displacement, then rounded
    once into global cells.
    """
    if not math.isclose(gmap.raster_cm, lmap.raster_cm, rel_tol=1e-12):
        raise MapError(
            f"raster mismatch: global {gmap.raster_cm} cm vs local {lmap.raster_cm} cm")
    a = math.radians(fix.heading_deg)
    ca, sa = math.cos(a), math.sin(a)
    ox, oy = lmap.origin
    for cx, cy in lmap.cells:
        x, y = cx - ox, cy - oy
        gx = _round_half_away(ca * x + sa * y + fix.dx)
        gy = _round_half_away(-sa * x + ca * y + fix.dy)
        gmap.cells.add((gx, gy))
    return gmap


# ---------------------------------------------------------------------------
# export formats

def _pack_rows(side_x: int, side_y: int, cell_at) -> bytes:
    """Row-major bitset, rows north to south, MSB-first, rows byte-padded."""
    row_bytes = (side_x + 7) // 8
    out = bytearray()
    for r in range(side_y):
        y = side_y - 1 - r
        row = bytearray(row_bytes)
        for x in range(side_x):
            if cell_at(x, y):
                row[x // 8] |= 0x80 >> (x % 8)
        out += row
    return bytes(out)


def local_to_binary(lmap: LocalMap) -> bytes:
    """Packed local map: magic EMRM + side (u16 LE) + row-major bitset."""
    g = lmap.grid()
    body = _pack_rows(lmap.side, lmap.side, lambda x, y: g[x][y])
    return _MAP_MAGIC + struct.pack("<H", lmap.side) + body


def local_from_binary(data: bytes, raster_cm: float = 1.0) -> LocalMap:
    if data[:4] != _MAP_MAGIC:
        raise MapError(f"bad local map magic {data[:4]!r}")
    if len(data) < 6:
        raise MapError("truncated local map header")
    (side,) = struct.unpack("<H", data[4:6])
    row_bytes = (side + 7) // 8
    body = data[6:]
    if len(body) != side * row_bytes:
        raise MapError(f"local map body {len(body)} bytes, expected {side * row_bytes}")
    lmap = LocalMap(side=side, raster_cm=raster_cm)
    for r in range(side):
        y = side - 1 - r
        row = body[r * row_bytes:(r + 1) * row_bytes]
        for x in range(side):
            if row[x // 8] & (0x80 >> (x % 8)):
                lmap.cells.add((x, y))
    return lmap


def local_to_pbm(lmap: LocalMap) -> str:
    """Portable bitmap (P1, ASCII), north up, 1 = obstacle."""
    g = lmap.grid()
    lines = [f"P1", f"{lmap.side} {lmap.side}"]
    for r in range(lmap.side):
        y = lmap.side - 1 - r
        lines.append(" ".join(str(g[x][y]) for x in range(lmap.side)))
    return "\n".join(lines) + "\n"


def global_to_binary(gmap: GlobalMap) -> bytes:
    """Packed global map: EMRG + raster (f64 LE) + min x/y (i32 LE) +
    width/height (u16 LE) + row-major bitset (north to south)."""
    if gmap.cells:
        xs = [c[0] for c in gmap.cells]
        ys = [c[1] for c in gmap.cells]
        min_x, min_y = min(xs), min(ys)
        w = max(xs) - min_x + 1
        h = max(ys) - min_y + 1
    else:
        min_x = min_y = 0
        w = h = 0
    cells = gmap.cells
    body = _pack_rows(w, h, lambda x, y: (x + min_x, y + min_y) in cells)
    return (_GLOBAL_MAGIC + struct.pack("<d", gmap.raster_cm)
            + struct.pack("<iiHH", min_x, min_y, w, h) + body)


def global_from_binary(data: bytes) -> GlobalMap:
    if data[:4] != _GLOBAL_MAGIC:
        raise MapError(f"bad global map magic {data[:4]!r}")
    if len(data) < 24:
        raise MapError("truncated global map header")
    (raster,) = struct.unpack("<d", data[4:12])
    min_x, min_y, w, h = struct.unpack("<iiHH", data[12:24])
    row_bytes = (w + 7) // 8
    body = data[24:]
    if len(body) != h * row_bytes:
        raise MapError(f"global map body {len(body)} bytes, expected {h * row_bytes}")
    gmap = GlobalMap(raster_cm=raster)
    for r in range(h):
        y = h - 1 - r
        row = body[r * row_bytes:(r + 1) * row_bytes]
        for x in range(w):
            if row[x // 8] & (0x80 >> (x % 8)):
                gmap.cells.add((x + min_x, y + min_y))
    return gmap


def global_to_pbm(gmap: GlobalMap) -> str:
    if not gmap.cells:
        return "P1\n0 0\n"
    xs = [c[0] for c in gmap.cells]
    ys = [c[1] for c in gmap.cells]
    min_x, max_x = min(xs), max(xs)
    min_y, max_y = min(ys), max(ys)
    w, h = max_x - min_x + 1, max_y - min_y + 1
    lines = ["P1", f"{w} {h}"]
    for r in range(h):
        y = max_y - r
        lines.append(" ".join(
            "1" if (x + min_x, y) in gmap.cells else "0" for x in range(w)))
    return "\n".join(lines) + "\n"
