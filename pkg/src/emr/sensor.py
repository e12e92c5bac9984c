"""IR range sensor model: transfer curve, ADC quantization, power gating.

The falling transfer branch is V(d) = a/(d + b) + c with b pinned to
min_range/4 and a, c solved from the two datasheet anchor voltages. The
near-field branch below min_range rises linearly from 0 V, reproducing
the curve's ambiguous left slope; beyond max_range (or on a miss) the
sensor floats at 0.9 * v_at_max so those codes sort below every valid
far-range code.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Union

import numpy as np

from .world import Pose, Scene, ray_cast

ADC_MAX = 1023
VREF_DEFAULT = 5.0

ANALOG = "analog"
DIGITAL_8BIT = "digital-8bit"
DIGITAL_1BIT = "digital-1bit"


class SensorError(ValueError):
    """Invalid sensor definition or misuse of the power manager."""


class CatalogError(SensorError):
    """Unknown or unusable catalog entry."""


@dataclass(frozen=True)
class SensorSpec:
    """Static description of one IR ranger type."""

    model: str
    min_range_cm: float
    max_range_cm: float
    output_kind: str
    v_at_min: float = 0.0  # volts at min_range (upper anchor)
    v_at_max: float = 0.0  # volts at max_range (lower anchor)

    def __post_init__(self):
        if self.output_kind not in (ANALOG, DIGITAL_8BIT, DIGITAL_1BIT):
            raise SensorError(f"unknown output kind {self.output_kind!r}")
        if not 0 < self.min_range_cm < self.max_range_cm:
            raise SensorError(
                f"need 0 < min_range < max_range, got "
                f"{self.min_range_cm}..{self.max_range_cm}")
        if self.output_kind != DIGITAL_1BIT and not self.v_at_min > self.v_at_max > 0:
            raise SensorError(
                f"need v_at_min > v_at_max > 0, got {self.v_at_min}/{self.v_at_max}")

    @property
    def rangeable(self) -> bool:
        """1-bit switch types cannot measure distance."""
        return self.output_kind != DIGITAL_1BIT


def curve_coefficients(spec: SensorSpec) -> tuple[float, float, float]:
    """(a, b, c) of the falling branch, anchored at both range limits."""
    if not spec.rangeable:
        raise SensorError(f"{spec.model} has no distance transfer curve")
    b = spec.min_range_cm / 4.0
    inv_lo = 1.0 / (spec.min_range_cm + b)
    inv_hi = 1.0 / (spec.max_range_cm + b)
    a = (spec.v_at_min - spec.v_at_max) / (inv_lo - inv_hi)
    c = spec.v_at_min - a * inv_lo
    return a, b, c


def voltage_of(spec: SensorSpec, true_distance: Optional[float]) -> float:
    """Output voltage for a ground-truth distance (None = no echo)."""
    a, b, c = curve_coefficients(spec)
    if true_distance is None or true_distance > spec.max_range_cm:
        return 0.9 * spec.v_at_max
    if true_distance < spec.min_range_cm:
        return spec.v_at_min * max(true_distance, 0.0) / spec.min_range_cm
    return a / (true_distance + b) + c


def invert_voltage(spec: SensorSpec, volts: float) -> Optional[float]:
    """Distance on the falling branch, or None outside [v_at_max, v_at_min]."""
    if not spec.v_at_max - 1e-9 <= volts <= spec.v_at_min + 1e-9:
        return None
    a, b, c = curve_coefficients(spec)
    d = a / (volts - c) - b
    return min(max(d, spec.min_range_cm), spec.max_range_cm)


def quantize(volts: float, vref: float = VREF_DEFAULT) -> int:
    """10-bit ADC code, round half up, clamped to 0..1023."""
    if vref <= 0:
        raise SensorError("vref must be positive")
    code = math.floor(volts / vref * ADC_MAX + 0.5)
    return min(max(code, 0), ADC_MAX)


@dataclass
class SensorState:
    """One attached sensor: its spec, supply state and ADC binding."""

    spec: SensorSpec
    channel: int  # 0..31
    powered: bool = False
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not 0 <= self.channel <= 31:
            raise SensorError(f"channel {self.channel} outside 0..31")
        if self.noise_sigma < 0:
            raise SensorError("noise_sigma must be >= 0")


def sample(state: SensorState, scene: Scene, pose: Pose, azimuth: float,
           rng: Union[int, np.random.Generator, None] = None) -> int:
    """One ADC reading: ray cast, transfer curve, noise, quantize.

    An unpowered sensor reads the channel floor (code 0). Pass a
    Generator to draw a reproducible noise sequence across calls, or an
    int seed for a single seeded draw.
    """
    if not state.powered:
        return 0
    distance = ray_cast(scene, pose, azimuth)
    volts = voltage_of(state.spec, distance)
    if state.noise_sigma > 0:
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        volts += rng.normal(0.0, state.noise_sigma)
    return quantize(volts)


# ---------------------------------------------------------------------------
# power management

class PowerManager:
    """Decoder-style supply gating: at most one sensor powered at a time.

    In scan mode only the head sensor may be powered; while driving, the
    fixed sensors are polled round-robin so they cannot blind each other.
    """

    SCAN = "scan"
    DRIVE = "drive"

    def __init__(self, head_channel: int, fixed_channels: list[int] | tuple[int, ...] = ()):
        channels = [head_channel, *fixed_channels]
        if len(set(channels)) != len(channels):
            raise SensorError(f"duplicate channels in {channels}")
        for ch in channels:
            if not 0 <= ch <= 31:
                raise SensorError(f"channel {ch} outside 0..31")
        self.head_channel = head_channel
        self.fixed_channels = tuple(fixed_channels)
        self.mode = self.DRIVE
        self.powered: Optional[int] = None
        self.rr_cursor = 0

    def attached(self) -> tuple[int, ...]:
        return (self.head_channel, *self.fixed_channels)

    def set_mode(self, mode: str) -> None:
        if mode not in (self.SCAN, self.DRIVE):
            raise SensorError(f"unknown power mode {mode!r}")
        self.mode = mode
        if mode == self.SCAN:
            self.powered = self.head_channel

    def power_table(self) -> dict[int, bool]:
        return {ch: ch == self.powered for ch in self.attached()}


def select_sensor(pm: PowerManager, index: int) -> PowerManager:
    """Power exactly the sensor at `index`, unpowering the previous one.

    In scan mode only the head sensor is selectable; a request for a
    fixed sensor is rejected and the head stays powered.
    """
    if index not in pm.attached():
        raise SensorError(f"channel {index} has no attached sensor")
    if pm.mode == PowerManager.SCAN and index != pm.head_channel:
        raise SensorError("scan in progress: only the head sensor may be powered")
    pm.powered = index
    return pm


def round_robin_next(pm: PowerManager) -> tuple[PowerManager, int]:
    """Advance the drive-mode polling cycle and power the next fixed sensor."""
    if pm.mode != PowerManager.DRIVE:
        raise SensorError("round-robin polling runs only in drive mode")
    if not pm.fixed_channels:
        raise SensorError("no fixed sensors attached")
    index = pm.fixed_channels[pm.rr_cursor % len(pm.fixed_channels)]
    pm.rr_cursor = (pm.rr_cursor + 1) % len(pm.fixed_channels)
    pm.powered = index
    return pm, index


# ---------------------------------------------------------------------------
# catalog

def _default_catalog_path() -> str:
    env = os.environ.get("EMR_SENSOR_CATALOG")
    if env:
        return env
    return str(resources.files("emr").joinpath("data/sensors.json"))


def load_catalog(path: Optional[str] = None) -> list[dict]:
    with open(path or _default_catalog_path(), encoding="utf-8") as f:
        entries = json.load(f)
    if not isinstance(entries, list):
        raise CatalogError("sensor catalog must be a JSON list")
    return entries


def get_sensor(model: str, path: Optional[str] = None) -> SensorSpec:
    """SensorSpec for a catalog model name; raises for unusable rows."""
    for entry in load_catalog(path):
        if entry.get("model") == model:
            lo, hi = entry["range_cm"]
            try:
                return SensorSpec(
                    model=model,
                    min_range_cm=float(lo),
                    max_range_cm=float(hi),
                    output_kind=entry["output"],
                    v_at_min=float(entry.get("v_at_min", 0.0)),
                    v_at_max=float(entry.get("v_at_max", 0.0)),
                )
            except SensorError as e:
                raise CatalogError(f"catalog row {model} is not usable: {e}") from e
    raise CatalogError(f"unknown sensor model {model!r}")
