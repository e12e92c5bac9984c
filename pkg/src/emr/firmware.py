"""Emulation of the scanner module's controller program.

One `Firmware` instance models one module: boot loads the weight image
from its storage bytes, arms the watchdog and enters the Ready loop;
`execute` dispatches decoded host commands and always answers with one
ACK or NAK; `scan` runs the sweep procedure against a simulated scene.
Time is a simulated clock (seconds), never wall time. All calls must be
serialized by the owner; the service funnels them through one queue.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import ann, mapping, motion, protocol
from .sensor import (PowerManager, SensorSpec, SensorState, sample,
                     select_sensor)
from .world import Pose, Scene

PHASE_INIT = "init"
PHASE_LOADING = "loading-weights"
PHASE_READY = "ready"
PHASE_EXECUTING = "executing"
PHASE_FAULTED = "faulted"

STEP_BATCH_DELAY_S = 0.05   # mechanical settling per segment advance
MEASURE_DELAY_S = 0.01      # conversion time per measurement
HEAD_LIMIT_DEG = 180.0


class FirmwareError(RuntimeError):
    pass


@dataclass
class MotorState:
    """One stepper channel: drive state plus its mechanical chain."""

    spec: motion.StepperSpec
    train: motion.GearTrain
    ramp: motion.RampProfile
    enabled: bool = False
    mode: str = "full"          # full | half
    direction: str = "right"    # right = clockwise/positive
    step_index: int = 0
    head_angle: float = 0.0

    def motor_step_deg(self) -> float:
        return motion.motor_step_angle(self.spec, self.mode)

    def head_step_deg(self) -> float:
        return motion.head_step_angle(self.train, self.motor_step_deg())

    def sequence_kind(self) -> str:
        return "bipolar-full" if self.mode == "full" else "bipolar-half"

    def coil_state(self) -> motion.CoilState:
        return motion.step_sequence(self.sequence_kind(), self.step_index)


@dataclass
class FirmwareConfig:
    """Static wiring of one module instance."""

    motors: list                  # 1 or 2 motor definitions (spec, train, ramp)
    head_channel: int = 0         # internal channel index 0..31
    fixed_channels: tuple = ()
    sensors: dict = field(default_factory=dict)  # channel -> SensorSpec
    scan: Optional[mapping.ScanConfig] = None
    noise_sigma: float = 0.0
    seed: Optional[int] = 0
    watchdog_interval_s: float = 30.0
    address: int = 0x28


class Firmware:
    """The module's operating program, desk-scale.

    Mutable state lives on the instance; `snapshot()` exports it for the
    service layer. A boot failure triggers exactly one automatic reset
    attempt before the module declares itself Faulted.
    """

    def __init__(self, eeprom_image: bytes, config: FirmwareConfig):
        self.config = config
        self.image = bytes(eeprom_image)
        self.phase = PHASE_INIT
        self.sim_clock = 0.0
        self.reset_count = 0
        self.log: list[str] = []
        self.weights: dict[str, ann.WeightMatrix] = {}
        self.motors: list[MotorState] = []
        self.power: Optional[PowerManager] = None
        self.sensors: dict[int, SensorState] = {}
        self.last_map: Optional[mapping.LocalMap] = None
        self.last_scan_elapsed: Optional[float] = None
        self.watchdog_deadline = 0.0
        self.scan_config = config.scan
        self.rng = np.random.default_rng(config.seed)
        self._boot_with_retry()

    # -- boot ---------------------------------------------------------------

    def _init_once(self) -> None:
        cfg = self.config
        self.phase = PHASE_INIT
        if not 1 <= len(cfg.motors) <= 2:
            raise FirmwareError("module drives one or two stepper motors")
        self.motors = [MotorState(spec=m[0], train=m[1], ramp=m[2]) for m in cfg.motors]
        self.power = PowerManager(cfg.head_channel, cfg.fixed_channels)
        self.sensors = {
            ch: SensorState(spec=spec, channel=ch, noise_sigma=cfg.noise_sigma)
            for ch, spec in cfg.sensors.items()
        }
        self.phase = PHASE_LOADING
        w = ann.deserialize_weights(self.image)
        w.geometry.check_adc()
        self.weights = {w.sensor_model: w}
        self.last_map = None
        self.last_scan_elapsed = None
        self.rng = np.random.default_rng(cfg.seed)
        self.watchdog_deadline = self.sim_clock + cfg.watchdog_interval_s
        self.phase = PHASE_READY
        self.log.append(f"boot complete at t={self.sim_clock:.3f}")

    def _boot_with_retry(self) -> None:
        try:
            self._init_once()
        except Exception as first:
            self.log.append(f"boot failed: {first}; module reset")
            self.reset_count += 1
            try:
                self._init_once()
            except Exception as second:
                self.log.append(f"boot failed again: {second}; faulted")
                self.phase = PHASE_FAULTED

    # -- watchdog -----------------------------------------------------------

    def _feed_watchdog(self) -> None:
        self.watchdog_deadline = self.sim_clock + self.config.watchdog_interval_s

    def watchdog_tick(self, now: float) -> None:
        """Advance the clock; past the deadline the module reboots itself."""
        self.sim_clock = max(self.sim_clock, now)
        if self.phase == PHASE_FAULTED:
            return
        if self.sim_clock > self.watchdog_deadline:
            self.log.append(f"watchdog expired at t={self.sim_clock:.3f}; reset")
            self.reset_count += 1
            try:
                self._init_once()
            except Exception as e:
                self.log.append(f"re-boot failed: {e}; faulted")
                self.phase = PHASE_FAULTED

    # -- helpers ------------------------------------------------------------

    def _weights_for(self, spec: SensorSpec) -> Optional[ann.WeightMatrix]:
        return self.weights.get(spec.model)

    def _read_adc(self, channel: int, scene: Scene, pose: Pose, azimuth: float = 0.0) -> int:
        """Power-select and sample a channel; unattached channels read 0."""
        state = self.sensors.get(channel)
        if state is None or channel not in self.power.attached():
            return 0
        if self.power.mode == PowerManager.DRIVE or channel == self.power.head_channel:
            select_sensor(self.power, channel)
        if self.power.powered != channel:
            return 0
        state.powered = True
        try:
            return sample(state, scene, pose, azimuth, self.rng)
        finally:
            state.powered = False

    def head_azimuth(self) -> float:
        return self.motors[0].head_angle

    # -- command dispatch ----------------------------------------------------

    def execute(self, cmd: protocol.Command, scene: Scene,
                pose: Pose) -> bytes:
        """Run one command; returns exactly one ACK or NAK response."""
        if self.phase != PHASE_READY:
            return protocol.nak_response(protocol.NakCode.BUSY)
        self.phase = PHASE_EXECUTING
        self._feed_watchdog()
        try:
            return self._dispatch(cmd, scene, pose)
        finally:
            if self.phase == PHASE_EXECUTING:
                self.phase = PHASE_READY

    def _dispatch(self, cmd: protocol.Command, scene: Scene, pose: Pose) -> bytes:
        if isinstance(cmd, protocol.QueryAdc):
            code = self._read_adc(cmd.channel - 1, scene, pose, self.head_azimuth()
                                  if cmd.channel - 1 == self.power.head_channel else 0.0)
            return protocol.ack_response(code.to_bytes(2, "big"))
        if isinstance(cmd, protocol.QueryDistance):
            channel = cmd.channel - 1
            code = self._read_adc(channel, scene, pose, self.head_azimuth()
                                  if channel == self.power.head_channel else 0.0)
            state = self.sensors.get(channel)
            distance = 0
            if state is not None:
                w = self._weights_for(state.spec)
                if w is not None:
                    distance = ann.infer_distance(w, code)
            return protocol.ack_response(bytes((min(distance, 255),)))
        if isinstance(cmd, protocol.Motor):
            return self._motor_command(cmd)
        if isinstance(cmd, protocol.LocalScan):
            if self.scan_config is None:
                return protocol.nak_response(protocol.NakCode.RESOLUTION)
            self.phase = PHASE_READY  # scan takes over phase handling
            return self.execute_scan_command(scene, pose, self.scan_config)
        return protocol.nak_response(protocol.NakCode.UNKNOWN_COMMAND)

    def _motor_command(self, cmd: protocol.Motor) -> bytes:
        if cmd.motor > len(self.motors):
            return protocol.nak_response(protocol.NakCode.BAD_ARGUMENT)
        m = self.motors[cmd.motor - 1]
        action = cmd.action
        A = protocol.MotorAction
        if action is A.ON:
            m.enabled = True
        elif action is A.OFF:
            m.enabled = False
        elif action is A.HALF_MODE:
            m.mode = "half"
        elif action is A.FULL_MODE:
            m.mode = "full"
        elif action is A.DIR_LEFT:
            m.direction = "left"
        elif action is A.DIR_RIGHT:
            m.direction = "right"
        elif action is A.STEP:
            if not m.enabled:
                return protocol.nak_response(protocol.NakCode.MOTOR_OFF)
            sign = 1 if m.direction == "right" else -1
            new_angle = m.head_angle + sign * m.head_step_deg()
            if abs(new_angle) > HEAD_LIMIT_DEG:
                return protocol.nak_response(protocol.NakCode.LIMIT)
            m.step_index += sign
            m.head_angle = new_angle
            self.sim_clock += STEP_BATCH_DELAY_S
        return protocol.ack_response(b"")

    # -- scan procedure -------------------------------------------------------

    def scan(self, scene: Scene, pose: Pose,
             cfg: mapping.ScanConfig) -> tuple[mapping.LocalMap, float]:
        """Sweep the head across cfg.sweep_deg and raster every echo.

        Drives to -sweep/2 with the ramp, measures every segment while
        stepping through the sweep, ramps back to zero. Only the head
        sensor is powered during the sweep; the previous power state is
        restored afterwards. Raises FirmwareError with a NAK code for
        guard violations.
        """
        if self.phase != PHASE_READY:
            raise FirmwareError(protocol.NakCode.BUSY.name)
        head = self.motors[0]
        if not head.enabled:
            raise FirmwareError(protocol.NakCode.MOTOR_OFF.name)
        head_step = head.head_step_deg()
        steps_per_segment = cfg.segment_deg / head_step
        if abs(steps_per_segment - round(steps_per_segment)) > 1e-6:
            raise FirmwareError(protocol.NakCode.RESOLUTION.name)
        self.phase = PHASE_EXECUTING
        self._feed_watchdog()
        pm = self.power
        saved_mode, saved_powered = pm.mode, pm.powered
        head_state = self.sensors.get(pm.head_channel)
        if head_state is None:
            self.phase = PHASE_READY
            raise FirmwareError(protocol.NakCode.FAULT.name)
        weights = self._weights_for(head_state.spec)
        if weights is None:
            self.phase = PHASE_READY
            raise FirmwareError(protocol.NakCode.FAULT.name)
        t0 = self.sim_clock
        pm.set_mode(PowerManager.SCAN)
        try:
            half_steps, _ = motion.steps_for_angle(
                head.train, head.motor_step_deg(), cfg.sweep_deg / 2.0)
            self.sim_clock += motion.travel_time(head.ramp, abs(half_steps))
            lmap = mapping.LocalMap.for_config(cfg)
            head_state.powered = True
            try:
                for i in range(cfg.measurement_count):
                    azimuth = -cfg.sweep_deg / 2.0 + i * cfg.segment_deg
                    self.sim_clock += MEASURE_DELAY_S
                    code = sample(head_state, scene, pose, azimuth, self.rng)
                    distance = ann.infer_distance(weights, code)
                    if 0 < distance <= cfg.sensor_max_cm:
                        mapping.plot_point(lmap, azimuth, float(distance))
                    self.sim_clock += STEP_BATCH_DELAY_S
            finally:
                head_state.powered = False
            self.sim_clock += motion.travel_time(head.ramp, abs(half_steps))
            head.head_angle = 0.0
        finally:
            pm.set_mode(saved_mode)
            pm.powered = saved_powered
            if self.phase == PHASE_EXECUTING:
                self.phase = PHASE_READY
        elapsed = self.sim_clock - t0
        self.last_map = lmap
        self.last_scan_elapsed = elapsed
        self._feed_watchdog()
        self.log.append(
            f"scan: {len(lmap.cells)} cells in {elapsed:.2f}s simulated")
        return lmap, elapsed

    def execute_scan_command(self, scene: Scene, pose: Pose,
                             cfg: mapping.ScanConfig) -> bytes:
        """LocalScan dispatch: ACK carries the packed map block."""
        if self.phase != PHASE_READY:
            return protocol.nak_response(protocol.NakCode.BUSY)
        try:
            lmap, _ = self.scan(scene, pose, cfg)
        except FirmwareError as e:
            return protocol.nak_response(protocol.NakCode[str(e)])
        return protocol.ack_response(mapping.local_to_binary(lmap))

    # -- state export ---------------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "phase": self.phase,
            "sim_clock": self.sim_clock,
            "reset_count": self.reset_count,
            "watchdog_deadline": self.watchdog_deadline,
            "motors": [
                {
                    "enabled": m.enabled,
                    "mode": m.mode,
                    "direction": m.direction,
                    "step_index": m.step_index,
                    "head_angle_deg": m.head_angle,
                    "head_step_deg": m.head_step_deg(),
                    "coils": vars(m.coil_state()),
                }
                for m in self.motors
            ],
            "power": {
                "mode": self.power.mode if self.power else None,
                "powered_channel": self.power.powered if self.power else None,
                "table": {str(k): v for k, v in (self.power.power_table() if self.power else {}).items()},
            },
            "last_scan": None if self.last_map is None else {
                "cells": len(self.last_map.cells),
                "side": self.last_map.side,
                "elapsed_s": self.last_scan_elapsed,
            },
        }


def boot(eeprom_image: bytes, config: FirmwareConfig) -> Firmware:
    """Construct and initialize a module from its storage image."""
    return Firmware(eeprom_image, config)
