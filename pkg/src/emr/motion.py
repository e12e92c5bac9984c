"""Stepper-motor and gear-train kinematics for the scan head.

Everything here is pure: gear reductions, motor-step/head-angle
conversion, full/half-step coil drive sequences, acceleration/brake
ramps (linear, exponential, cubic s-curve) and the chopper frequency
of the current-limiting driver stage.

Angles are degrees throughout; rates are motor steps per second.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional


class MotionError(ValueError):
    """Invalid kinematic parameter or ramp query."""


def _round_half_away(x: float) -> int:
    """Round to nearest integer, ties away from zero."""
    if x >= 0:
        return int(math.floor(x + 0.5))
    return int(math.ceil(x - 0.5))


# ---------------------------------------------------------------------------
# gear train

@dataclass(frozen=True)
class GearStage:
    """One gear pair: driving wheel with z_in teeth, driven wheel with z_out."""

    z_in: int
    z_out: int

    def __post_init__(self):
        if self.z_in < 1 or self.z_out < 1:
            raise MotionError(f"tooth counts must be >= 1, got {self.z_in}/{self.z_out}")

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.z_in, self.z_out)


@dataclass(frozen=True)
class GearTrain:
    """Ordered gear stages, motor pinion first."""

    stages: tuple[GearStage, ...]

    def __post_init__(self):
        if len(self.stages) < 1:
            raise MotionError("gear train needs at least one stage")

    @classmethod
    def from_pairs(cls, pairs) -> "GearTrain":
        return cls(tuple(GearStage(int(a), int(b)) for a, b in pairs))

    @property
    def ratio(self) -> Fraction:
        """Overall speed ratio output/input as an exact fraction."""
        r = Fraction(1)
        for s in self.stages:
            r *= s.ratio
        return r

    @property
    def reduction(self) -> Fraction:
        """Reduction i = input turns per output turn (1:i)."""
        return 1 / self.ratio


def stage_output_speed(stage: GearStage, n_in: float) -> float:
    """Output shaft speed for one gear pair: n_out = (z_in/z_out) * n_in."""
    return (stage.z_in / stage.z_out) * n_in


def head_step_angle(train: GearTrain, motor_step_deg: float) -> float:
    """Head rotation per motor step after the whole reduction chain."""
    r = train.ratio
    return motor_step_deg * r.numerator / r.denominator


def steps_for_angle(train: GearTrain, motor_step_deg: float,
                    target_deg: float) -> tuple[int, float]:
    """Whole motor steps that best reach target_deg, and the angle achieved.

    Steps are an integer (signed like the target, nearest, ties away from
    zero) so the controller can stay in integer arithmetic.
    """
    per_step = head_step_angle(train, motor_step_deg)
    if per_step <= 0:
        raise MotionError("head step angle must be positive")
    steps = _round_half_away(target_deg / per_step)
    return steps, steps * per_step


# ---------------------------------------------------------------------------
# stepper motor

@dataclass(frozen=True)
class StepperSpec:
    """Electrical/mechanical stepper parameters.

    pole_count_2p stores the value of 2p (pole count), phase_count the
    strand count m. step_angle_full, if given alongside both counts, must
    equal 360/(2p*m).
    """

    pole_count_2p: Optional[int] = None
    phase_count: Optional[int] = None
    step_angle_full: Optional[float] = None
    rated_voltage: Optional[float] = None
    phase_current: Optional[float] = None
    winding_resistance: Optional[float] = None

    def __post_init__(self):
        for name in ("pole_count_2p", "phase_count", "step_angle_full",
                     "rated_voltage", "phase_current", "winding_resistance"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise MotionError(f"{name} must be positive, got {v}")
        if (self.pole_count_2p is not None and self.phase_count is not None
                and self.step_angle_full is not None):
            derived = 360.0 / (self.pole_count_2p * self.phase_count)
            if not math.isclose(derived, self.step_angle_full, rel_tol=1e-9):
                raise MotionError(
                    f"step angle {self.step_angle_full} inconsistent with "
                    f"360/(2p*m) = {derived}")


def stepper_derived(spec: StepperSpec, mode: str = "full") -> tuple[float, int]:
    """Step angle and steps per revolution for full or half stepping.

    Full: alpha = 360/(2p*m), S = 2p*m. Half stepping doubles S and
    halves alpha.
    """
    if spec.pole_count_2p is None or spec.phase_count is None:
        raise MotionError("pole and phase counts required")
    s_full = spec.pole_count_2p * spec.phase_count
    if mode == "full":
        return 360.0 / s_full, s_full
    if mode == "half":
        return 360.0 / (2 * s_full), 2 * s_full
    raise MotionError(f"unknown step mode {mode!r}")


def shaft_speed(step_rate: float, steps_per_rev: int) -> float:
    """Revolutions per second: n = f_s / S."""
    return step_rate / steps_per_rev


# ---------------------------------------------------------------------------
# coil drive sequences

@dataclass(frozen=True)
class CoilState:
    """Polarity at the four coil terminals; '+', '-' or '0' (de-energized)."""

    s1a: str
    s1b: str
    s2a: str
    s2b: str


_BIPOLAR_FULL = (
    CoilState("+", "-", "+", "-"),
    CoilState("+", "-", "-", "+"),
    CoilState("-", "+", "-", "+"),
    CoilState("-", "+", "+", "-"),
)

_BIPOLAR_HALF = (
    CoilState("+", "-", "+", "-"),
    CoilState("+", "-", "0", "0"),
    CoilState("+", "-", "-", "+"),
    CoilState("0", "0", "-", "+"),
    CoilState("-", "+", "-", "+"),
    CoilState("-", "+", "0", "0"),
    CoilState("-", "+", "+", "-"),
    CoilState("0", "0", "+", "-"),
)

_UNIPOLAR_FULL = (
    CoilState("+", "0", "0", "+"),
    CoilState("+", "0", "+", "0"),
    CoilState("0", "+", "+", "0"),
    CoilState("0", "+", "0", "+"),
)

_SEQUENCES = {
    "bipolar-full": _BIPOLAR_FULL,
    "bipolar-half": _BIPOLAR_HALF,
    "unipolar-full": _UNIPOLAR_FULL,
}


def step_sequence(kind: str, step_index: int) -> CoilState:
    """Coil polarities for a step index; cycles of 4, 8 and 4 rows.

    Negative indices wrap backwards through the cycle.
    """
    try:
        table = _SEQUENCES[kind]
    except KeyError:
        raise MotionError(f"unknown sequence kind {kind!r}") from None
    return table[step_index % len(table)]


def sequence_length(kind: str) -> int:
    return len(_SEQUENCES[kind])


# ---------------------------------------------------------------------------
# speed ramps

@dataclass(frozen=True)
class RampProfile:
    """Step-rate profile between start-stop rate n_s and target rate n_0.

    kind selects the family:
      linear       -- slope (steps/s^2) up to n_0, mirrored for braking
      exponential  -- capacitor-curve shape with time constant tau,
                      defined on [0, t_br]
      s-curve      -- cubic easing between (0, n_s) and (t_br, n_0),
                      approximated by segment_count straight chords
    """

    kind: str
    n_s: float
    n_0: float
    slope: Optional[float] = None
    tau: Optional[float] = None
    t_br: Optional[float] = None
    segment_count: Optional[int] = None

    def __post_init__(self):
        if not (self.n_0 >= self.n_s > 0):
            raise MotionError(f"need n_0 >= n_s > 0, got n_s={self.n_s} n_0={self.n_0}")
        if self.kind == "linear":
            if self.slope is None or self.slope <= 0:
                raise MotionError("linear ramp needs a positive slope")
        elif self.kind == "exponential":
            if self.tau is None or self.tau <= 0:
                raise MotionError("exponential ramp needs tau > 0")
            if self.t_br is None or self.t_br <= 0:
                raise MotionError("exponential ramp needs t_br > 0")
        elif self.kind == "s-curve":
            if self.t_br is None or self.t_br <= 0:
                raise MotionError("s-curve ramp needs t_br > 0")
            if self.segment_count is None or self.segment_count < 2:
                raise MotionError("s-curve ramp needs segment_count >= 2")
        else:
            raise MotionError(f"unknown ramp kind {self.kind!r}")


def _cubic_ease(u: float) -> float:
    """Zero-slope-at-both-ends cubic, 0 -> 0 and 1 -> 1."""
    return 3.0 * u * u - 2.0 * u * u * u


def _scurve_chord(p: RampProfile, t: float, rising: bool) -> float:
    k = p.segment_count
    u = min(max(t / p.t_br, 0.0), 1.0)
    j = min(int(u * k), k - 1)
    u0, u1 = j / k, (j + 1) / k
    f0, f1 = _cubic_ease(u0), _cubic_ease(u1)
    frac = (u - u0) / (u1 - u0)
    eased = f0 + (f1 - f0) * frac
    span = p.n_0 - p.n_s
    if rising:
        return p.n_s + span * eased
    return p.n_0 - span * eased


def ramp_rate(profile: RampProfile, t: float, direction: str = "accelerate") -> float:
    """Step rate at time t into an acceleration or brake phase."""
    if t < 0:
        raise MotionError("t must be >= 0")
    if direction not in ("accelerate", "brake"):
        raise MotionError(f"unknown ramp direction {direction!r}")
    accel = direction == "accelerate"
    p = profile
    if p.kind == "linear":
        if accel:
            return min(p.n_s + p.slope * t, p.n_0)
        return max(p.n_0 - p.slope * t, p.n_s)
    if p.kind == "exponential":
        if t > p.t_br:
            raise MotionError(f"exponential ramp undefined past t_br={p.t_br}")
        decay = math.exp(-(p.t_br - t) / p.tau)
        if accel:
            return (p.n_0 - p.n_s) * decay + p.n_s
        return (p.n_0 - p.n_s) * (1.0 - decay) + p.n_s
    # s-curve: clamp queries past t_br to the endpoint
    return _scurve_chord(p, t, rising=accel)


def scurve_reference(profile: RampProfile, t: float) -> float:
    """The underlying cubic the s-curve chords approximate (for checks)."""
    u = min(max(t / profile.t_br, 0.0), 1.0)
    return profile.n_s + (profile.n_0 - profile.n_s) * _cubic_ease(u)


def travel_time(profile: RampProfile, n_steps: int) -> float:
    """Simulated time to execute n_steps with ramped acceleration and a
    mirrored brake phase.

    The rate follows the accelerate curve step by step; once the target
    rate is reached the motor cruises. Braking replays the recorded
    acceleration rates in reverse, so short moves turn into a symmetric
    triangle without ever reaching n_0.
    """
    if n_steps <= 0:
        return 0.0
    accel_hist: list[float] = []
    t_accel = 0.0
    total = 0.0
    cruising = False
    limit = profile.t_br if profile.kind in ("exponential", "s-curve") else None
    for i in range(n_steps):
        remaining = n_steps - i
        if remaining <= len(accel_hist):
            rate = accel_hist[remaining - 1]
        elif cruising:
            rate = profile.n_0
        else:
            tq = t_accel if limit is None else min(t_accel, limit)
            rate = ramp_rate(profile, tq, "accelerate")
            if rate >= profile.n_0 or (limit is not None and t_accel >= limit):
                rate = profile.n_0
                cruising = True
            else:
                accel_hist.append(rate)
            t_accel += 1.0 / rate
        total += 1.0 / rate
    return total


# ---------------------------------------------------------------------------
# driver stage

def chopper_frequency(r_ohm: float, c_farad: float) -> float:
    """PWM chopper frequency of the RC-clocked driver: f = 1/(0.69*R*C)."""
    if r_ohm <= 0 or c_farad <= 0:
        raise MotionError("R and C must be positive")
    return 1.0 / (0.69 * r_ohm * c_farad)


# ---------------------------------------------------------------------------
# configuration document

def parse_motor_config(doc: dict) -> tuple[StepperSpec, GearTrain, RampProfile]:
    """Parse one {"motor": {...}, "stages": [...], "ramp": {...}} record."""
    m = doc.get("motor", {})
    spec = StepperSpec(
        pole_count_2p=m.get("poles_2p"),
        phase_count=m.get("phases"),
        step_angle_full=m.get("step_deg"),
        rated_voltage=m.get("rated_voltage"),
        phase_current=m.get("phase_current"),
        winding_resistance=m.get("winding_resistance"),
    )
    if spec.step_angle_full is None and (spec.pole_count_2p is None or spec.phase_count is None):
        raise MotionError("motor config needs step_deg or poles_2p + phases")
    train = GearTrain.from_pairs(doc.get("stages", []))
    r = doc.get("ramp", {})
    ramp = RampProfile(
        kind=r.get("kind", "linear"),
        n_s=float(r.get("n_s", 200.0)),
        n_0=float(r.get("n_0", 500.0)),
        slope=r.get("slope"),
        tau=r.get("tau"),
        t_br=r.get("t_br"),
        segment_count=r.get("segment_count"),
    )
    return spec, train, ramp


def motor_step_angle(spec: StepperSpec, mode: str = "full") -> float:
    """Motor step angle honoring the mode, from the explicit angle if given."""
    if spec.step_angle_full is not None:
        return spec.step_angle_full if mode == "full" else spec.step_angle_full / 2.0
    return stepper_derived(spec, mode)[0]
