import math

import pytest

from emr import protocol
from emr.firmware import Firmware, PHASE_FAULTED, PHASE_READY
from emr.mapping import ScanConfig, measurement_duration
from emr.protocol import (LocalScan, Motor, MotorAction, NakCode, QueryAdc,
                          QueryDistance, parse_response)
from emr.world import Pose, Scene

from conftest import make_config

EMPTY_SCENE = Scene(segments=((0, 990, 1, 990),), bounds=(-1000, -1000, 1000, 1000))
ORIGIN = Pose(0, 0, 0)


def ready_module(image: bytes, **overrides) -> Firmware:
    fw = Firmware(image, make_config(**overrides))
    assert fw.phase == PHASE_READY
    return fw


def ok_payload(reply: bytes) -> bytes:
    ok, payload = parse_response(reply)
    assert ok, f"expected ACK, got NAK({payload})"
    return payload


def nak_code(reply: bytes) -> NakCode:
    ok, code = parse_response(reply)
    assert not ok, "expected NAK"
    return code


class TestBoot:
    def test_valid_image_reaches_ready(self, gp2d120_image):
        fw = Firmware(gp2d120_image, make_config())
        assert fw.phase == PHASE_READY
        assert "GP2D120" in fw.weights
        assert fw.reset_count == 0

    def test_bad_magic_one_reset_then_faulted(self):
        fw = Firmware(b"JUNK" + bytes(64), make_config())
        assert fw.phase == PHASE_FAULTED
        assert fw.reset_count == 1
        assert any("reset" in line for line in fw.log)

    def test_boot_is_deterministic(self, gp2d120_image):
        a = Firmware(gp2d120_image, make_config())
        b = Firmware(gp2d120_image, make_config())
        assert a.snapshot() == b.snapshot()

    def test_truncated_image_faults(self, gp2d120_image):
        fw = Firmware(gp2d120_image[:100], make_config())
        assert fw.phase == PHASE_FAULTED


class TestExecute:
    def test_command_in_faulted_phase_gets_busy_nak(self, gp2d120_image):
        fw = Firmware(b"JUNK" + bytes(64), make_config())
        reply = fw.execute(QueryAdc(1), EMPTY_SCENE, ORIGIN)
        assert nak_code(reply) is NakCode.BUSY

    def test_every_command_gets_exactly_one_response(self, gp2d120_image,
                                                     square_room_40, center_pose):
        fw = ready_module(gp2d120_image)
        fw.motors[0].enabled = True
        for cmd in protocol.all_commands():
            reply = fw.execute(cmd, square_room_40, center_pose)
            assert reply[0] in (protocol.ACK, protocol.NAK)
            parse_response(reply)  # must be well-formed
            assert fw.phase == PHASE_READY

    def test_query_adc_returns_two_bytes(self, gp2d120_image, square_room_40,
                                         center_pose):
        fw = ready_module(gp2d120_image)
        payload = ok_payload(fw.execute(QueryAdc(1), square_room_40, center_pose))
        assert len(payload) == 2
        code = int.from_bytes(payload, "big")
        assert 0 < code < 1024

    def test_query_adc_unattached_channel_reads_floor(self, gp2d120_image,
                                                      square_room_40, center_pose):
        fw = ready_module(gp2d120_image)
        payload = ok_payload(fw.execute(QueryAdc(32), square_room_40, center_pose))
        assert int.from_bytes(payload, "big") == 0

    def test_query_distance_against_wall_at_100cm(self, gp2y_image):
        # long-range sensor, wall 100 cm north of the head
        scene = Scene(segments=((-500, 100, 500, 100),), bounds=(-500, -10, 500, 110))
        fw = ready_module(gp2y_image, sensor_model="GP2Y0A02YK",
                          scan=ScanConfig(180, 1.5, 1.0, 150))
        payload = ok_payload(fw.execute(QueryDistance(1), scene, ORIGIN))
        assert len(payload) == 1
        assert abs(payload[0] - 100) <= 1

    def test_query_distance_no_echo_reads_zero(self, gp2d120_image):
        fw = ready_module(gp2d120_image)
        payload = ok_payload(fw.execute(QueryDistance(1), EMPTY_SCENE, ORIGIN))
        assert payload[0] == 0

    def test_noise_free_pipeline_recovers_distance_within_1cm(self, gp2d120_image):
        # sample -> infer round trip over the calibrated range, sigma = 0
        fw = ready_module(gp2d120_image)
        for wall in range(5, 30):
            scene = Scene(segments=((-100, wall, 100, wall),),
                          bounds=(-100, -1, 100, wall + 1))
            payload = ok_payload(fw.execute(QueryDistance(1), scene, ORIGIN))
            assert abs(payload[0] - wall) <= 1, f"wall at {wall} read {payload[0]}"

    def test_watchdog_fed_on_dispatch(self, gp2d120_image, square_room_40,
                                      center_pose):
        fw = ready_module(gp2d120_image)
        fw.sim_clock = 25.0
        before = fw.watchdog_deadline
        fw.execute(QueryAdc(1), square_room_40, center_pose)
        assert fw.watchdog_deadline > before


class TestMotorCommands:
    def test_four_full_steps_return_to_sequence_start(self, gp2d120_image):
        fw = ready_module(gp2d120_image)
        ok_payload(fw.execute(Motor(1, MotorAction.ON), EMPTY_SCENE, ORIGIN))
        head_step = fw.motors[0].head_step_deg()
        for _ in range(4):
            ok_payload(fw.execute(Motor(1, MotorAction.STEP), EMPTY_SCENE, ORIGIN))
        m = fw.motors[0]
        assert m.step_index % 4 == 0
        assert m.coil_state() == fw.motors[0].coil_state()
        assert m.head_angle == pytest.approx(4 * head_step)

    def test_step_while_disabled_nak(self, gp2d120_image):
        fw = ready_module(gp2d120_image)
        assert nak_code(fw.execute(Motor(1, MotorAction.STEP),
                                   EMPTY_SCENE, ORIGIN)) is NakCode.MOTOR_OFF

    def test_direction_left_steps_negative(self, gp2d120_image):
        fw = ready_module(gp2d120_image)
        fw.execute(Motor(1, MotorAction.ON), EMPTY_SCENE, ORIGIN)
        fw.execute(Motor(1, MotorAction.DIR_LEFT), EMPTY_SCENE, ORIGIN)
        fw.execute(Motor(1, MotorAction.STEP), EMPTY_SCENE, ORIGIN)
        assert fw.motors[0].head_angle < 0
        assert fw.motors[0].step_index == -1

    def test_half_mode_halves_the_head_step(self, gp2d120_image):
        fw = ready_module(gp2d120_image)
        fw.execute(Motor(1, MotorAction.ON), EMPTY_SCENE, ORIGIN)
        full = fw.motors[0].head_step_deg()
        fw.execute(Motor(1, MotorAction.HALF_MODE), EMPTY_SCENE, ORIGIN)
        assert fw.motors[0].head_step_deg() == pytest.approx(full / 2)
        fw.execute(Motor(1, MotorAction.FULL_MODE), EMPTY_SCENE, ORIGIN)
        assert fw.motors[0].head_step_deg() == pytest.approx(full)

    def test_second_motor_independent(self, gp2d120_image):
        fw = ready_module(gp2d120_image)
        fw.execute(Motor(2, MotorAction.ON), EMPTY_SCENE, ORIGIN)
        fw.execute(Motor(2, MotorAction.STEP), EMPTY_SCENE, ORIGIN)
        assert fw.motors[1].head_angle > 0
        assert fw.motors[0].head_angle == 0

    def test_head_angle_clamped_at_limit(self, gp2d120_image):
        fw = ready_module(gp2d120_image)
        fw.execute(Motor(1, MotorAction.ON), EMPTY_SCENE, ORIGIN)
        m = fw.motors[0]
        m.head_angle = 179.99  # just under the stop
        steps_left = math.ceil((180 - m.head_angle) / m.head_step_deg())
        replies = [fw.execute(Motor(1, MotorAction.STEP), EMPTY_SCENE, ORIGIN)
                   for _ in range(steps_left + 5)]
        assert abs(m.head_angle) <= 180.0
        assert nak_code(replies[-1]) is NakCode.LIMIT

    def test_angle_stays_inside_limits_under_any_sequence(self, gp2d120_image):
        import random
        rng = random.Random(5)
        fw = ready_module(gp2d120_image)
        actions = list(MotorAction)
        for _ in range(400):
            cmd = Motor(rng.choice((1, 2)), rng.choice(actions))
            fw.execute(cmd, EMPTY_SCENE, ORIGIN)
            for m in fw.motors:
                assert abs(m.head_angle) <= 180.0


class TestScan:
    def test_empty_scene_yields_empty_map(self, gp2d120_image):
        fw = ready_module(gp2d120_image)
        fw.motors[0].enabled = True
        lmap, elapsed = fw.scan(EMPTY_SCENE, ORIGIN, fw.scan_config)
        assert len(lmap.cells) == 0
        assert elapsed > 0

    def test_square_room_scan_hugs_the_walls(self, gp2d120_image, square_room_40,
                                             center_pose):
        fw = ready_module(gp2d120_image)
        fw.motors[0].enabled = True
        cfg = fw.scan_config
        lmap, elapsed = fw.scan(square_room_40, center_pose, cfg)
        assert len(lmap.cells) > 40
        est = measurement_duration(cfg)
        assert abs(elapsed - est) / est < 0.15

    def test_scan_requires_enabled_motor(self, gp2d120_image, square_room_40,
                                         center_pose):
        fw = ready_module(gp2d120_image)
        reply = fw.execute_scan_command(square_room_40, center_pose, fw.scan_config)
        assert nak_code(reply) is NakCode.MOTOR_OFF

    def test_unrealizable_segment_angle_naks(self, gp2d120_image, square_room_40,
                                             center_pose):
        fw = ready_module(gp2d120_image)
        fw.motors[0].enabled = True
        cfg = ScanConfig(180, 1.8, 1.0, 30)  # 1.8 / 0.05 = 36 steps, fine
        bad = ScanConfig(180, 0.9375, 1.0, 30)  # 18.75 steps per segment
        assert nak_code(fw.execute_scan_command(
            square_room_40, center_pose, bad)) is NakCode.RESOLUTION
        ok, _ = parse_response(fw.execute_scan_command(square_room_40, center_pose, cfg))
        assert ok

    def test_power_state_restored_and_head_at_zero(self, gp2d120_image,
                                                   square_room_40, center_pose):
        fw = ready_module(gp2d120_image)
        fw.motors[0].enabled = True
        from emr.sensor import select_sensor
        select_sensor(fw.power, 2)
        mode_before, powered_before = fw.power.mode, fw.power.powered
        fw.scan(square_room_40, center_pose, fw.scan_config)
        assert fw.power.mode == mode_before
        assert fw.power.powered == powered_before
        assert abs(fw.motors[0].head_angle) <= fw.motors[0].head_step_deg() / 2

    def test_scan_command_acks_with_map_block(self, gp2d120_image, square_room_40,
                                              center_pose):
        from emr.mapping import local_from_binary
        fw = ready_module(gp2d120_image)
        fw.motors[0].enabled = True
        payload = ok_payload(fw.execute(LocalScan(), square_room_40, center_pose))
        lmap = local_from_binary(payload)
        assert lmap.side == 60
        assert len(lmap.cells) > 40

    def test_scan_deterministic_for_fixed_config(self, gp2d120_image,
                                                 square_room_40, center_pose):
        runs = []
        for _ in range(2):
            fw = ready_module(gp2d120_image)
            fw.motors[0].enabled = True
            lmap, elapsed = fw.scan(square_room_40, center_pose, fw.scan_config)
            runs.append((frozenset(lmap.cells), elapsed))
        assert runs[0] == runs[1]

    def test_sim_clock_monotone_through_scan(self, gp2d120_image, square_room_40,
                                             center_pose):
        fw = ready_module(gp2d120_image)
        fw.motors[0].enabled = True
        t0 = fw.sim_clock
        fw.scan(square_room_40, center_pose, fw.scan_config)
        t1 = fw.sim_clock
        fw.execute(Motor(1, MotorAction.STEP), EMPTY_SCENE, ORIGIN)
        assert t0 < t1 <= fw.sim_clock


class TestWatchdog:
    def test_fed_module_never_resets(self, gp2d120_image):
        fw = ready_module(gp2d120_image)
        for t in range(1, 10):
            fw.execute(QueryAdc(1), EMPTY_SCENE, ORIGIN)
            fw.watchdog_tick(float(t))
        assert fw.reset_count == 0

    def test_expiry_triggers_reboot(self, gp2d120_image):
        fw = ready_module(gp2d120_image)
        fw.watchdog_tick(fw.watchdog_deadline + 1.0)
        assert fw.reset_count == 1
        assert fw.phase == PHASE_READY

    def test_expiry_with_corrupt_image_faults(self):
        fw = Firmware(b"JUNK" + bytes(64), make_config())
        assert fw.phase == PHASE_FAULTED
        fw.watchdog_tick(1e9)
        fw.watchdog_tick(2e9)
        assert fw.phase == PHASE_FAULTED

    def test_reboot_resets_motor_state(self, gp2d120_image):
        fw = ready_module(gp2d120_image)
        fw.execute(Motor(1, MotorAction.ON), EMPTY_SCENE, ORIGIN)
        fw.execute(Motor(1, MotorAction.STEP), EMPTY_SCENE, ORIGIN)
        fw.watchdog_tick(fw.watchdog_deadline + 5.0)
        assert fw.motors[0].enabled is False
        assert fw.motors[0].head_angle == 0.0

    def test_clock_monotone_under_stale_ticks(self, gp2d120_image):
        fw = ready_module(gp2d120_image)
        fw.watchdog_tick(5.0)
        fw.watchdog_tick(2.0)  # stale timestamp must not rewind
        assert fw.sim_clock == 5.0
