import pytest

from emr import ann, motion
from emr.firmware import FirmwareConfig
from emr.mapping import ScanConfig
from emr.sensor import get_sensor
from emr.session import load_session
from emr.world import Pose, Scene


@pytest.fixture(scope="session")
def gp2d120_image() -> bytes:
    return ann.serialize_weights(ann.synthesize_weights(get_sensor("GP2D120")))


@pytest.fixture(scope="session")
def gp2y_image() -> bytes:
    # 3 cm class resolution: the 1 cm staircase exceeds the storage part
    return ann.serialize_weights(
        ann.synthesize_weights(get_sensor("GP2Y0A02YK"), resolution=3.0))


def motor_definition(stages=((10, 40), (5, 90))):
    spec = motion.StepperSpec(pole_count_2p=50, phase_count=2, step_angle_full=3.6)
    train = motion.GearTrain.from_pairs(stages)
    ramp = motion.RampProfile("linear", n_s=200, n_0=500, slope=600)
    return spec, train, ramp


def make_config(sensor_model="GP2D120", scan=None, **overrides) -> FirmwareConfig:
    spec = get_sensor(sensor_model)
    defaults = dict(
        motors=[motor_definition(), motor_definition()],
        head_channel=0,
        fixed_channels=(1, 2, 3),
        sensors={ch: spec for ch in (0, 1, 2, 3)},
        scan=scan or ScanConfig(180, 1.5, 1.0, spec.max_range_cm),
        noise_sigma=0.0,
        seed=7,
    )
    defaults.update(overrides)
    return FirmwareConfig(**defaults)


@pytest.fixture()
def square_room_40() -> Scene:
    return Scene(
        segments=((0, 0, 40, 0), (40, 0, 40, 40), (40, 40, 0, 40), (0, 40, 0, 0)),
        bounds=(0, 0, 40, 40))


@pytest.fixture()
def center_pose() -> Pose:
    return Pose(20, 20, 0)


@pytest.fixture(scope="session")
def bundled_session():
    return load_session()
