"""Shared scene fixtures: the desk-scale approach used across the suite."""

import numpy as np
import pytest

from switched_servo.camera import Intrinsics, Marker
from switched_servo.dmp import DmpGains, build_basis, learn_weights, minjerk_demo
from switched_servo.geometry import Pose, quat_exp
from switched_servo.ibvs import IbvsGains, reference_from_goal
from switched_servo.switchctl import SwitchConfig


@pytest.fixture(scope="session")
def intrinsics():
    return Intrinsics(407.1, 407.1, 323.4, 205.6, 640, 420)


@pytest.fixture(scope="session")
def marker():
    return Marker.square(0.1)


@pytest.fixture(scope="session")
def goal_pose():
    # one meter above the marker, optical axis straight down
    return Pose(quat_exp([np.pi, 0.0, 0.0]), [0.0, 0.0, 1.0], "world", "camera")


@pytest.fixture(scope="session")
def start_pose(goal_pose):
    # offset 0.8 m along x with a 15 degree twist about the optical axis
    twist = quat_exp([0.0, 0.0, np.deg2rad(15.0)])
    return Pose(goal_pose.rotation.multiply(twist), [0.8, 0.0, 1.0], "world", "camera")


@pytest.fixture(scope="session")
def ref(marker, goal_pose, intrinsics):
    return reference_from_goal(marker, goal_pose, intrinsics)


@pytest.fixture(scope="session")
def dmp_gains():
    return DmpGains(140.0, 35.0, 4.0, 1.0, 1.0, 1.0, 2.5)


@pytest.fixture(scope="session")
def ibvs_gains():
    return IbvsGains(5.0, 10.0, 0.01)


@pytest.fixture(scope="session")
def switch_cfg():
    return SwitchConfig(0.42, 0.85, 13.82, 1, 4, True)


@pytest.fixture(scope="session")
def trained_model(start_pose, goal_pose, dmp_gains):
    demo = minjerk_demo(start_pose, goal_pose, 2.5, 100.0)
    basis = build_basis(25, 1.0)
    return learn_weights(demo, dmp_gains, basis, basis)
