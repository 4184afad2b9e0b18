import numpy as np
import pytest

from fsflow import CameraIntrinsics, MountConfig


@pytest.fixture
def intrinsics():
    """Camera of the worked examples: f = 700 px, principal point (600, 200)."""
    return CameraIntrinsics(fx=700.0, fy=700.0, u0=600.0, v0=200.0)


@pytest.fixture
def mount():
    """Mounting of the worked examples: 1.5 m above the road, zero roll."""
    return MountConfig(h=1.5, theta=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_intrinsics(rng):
    return CameraIntrinsics(
        fx=rng.uniform(300.0, 1500.0),
        fy=rng.uniform(300.0, 1500.0),
        u0=rng.uniform(400.0, 800.0),
        v0=rng.uniform(100.0, 300.0),
    )


def random_mount(rng, theta_range=0.2):
    return MountConfig(h=rng.uniform(0.5, 2.5), theta=rng.uniform(-theta_range, theta_range))
