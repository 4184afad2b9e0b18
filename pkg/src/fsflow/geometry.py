"""Camera and ground-plane geometry.

Coordinate conventions used throughout the package:

    vehicle coordinate system (VCS)        pixel coordinate system (PCS)
    camera coordinate system (CCS)
                                               o----------> u (columns)
          o----------> X (right)               |
          |\                                   |
          | \                                  v
          |  \                                 v (rows)
          v   Z (forward, travel direction)
          Y (down)

The VCS and CCS share their origin at the camera's optical centre, with
the Y axis pointing straight down and the Z axis along the vehicle's
travel direction.  The CCS is the VCS rotated by the camera roll angle
``theta`` about the Z axis (mounting error, or centrifugal lean while
turning): ``p_c = R_theta @ p_v``.  The road is the horizontal plane
``y = h`` in the VCS, where ``h`` is the camera's mounting height above
the ground.

Pixel coordinates are real-valued everywhere; nothing is rounded until
a dense map is rasterized in :mod:`fsflow.flow_models`.

For a pixel (u, v) the pair of ground-ray coefficients

    lambda1 = ((u - u0)/fx) * sin(theta) + ((v - v0)/fy) * cos(theta)
    lambda2 = ((u - u0)/fx) * cos(theta) - ((v - v0)/fy) * sin(theta)

equals (y/z, x/z) of any VCS point on the pixel's viewing ray.  The ray
meets the road plane iff lambda1 > 0, at depth z = h / lambda1; pixels
with lambda1 <= EPS_HORIZON are treated as at/above the horizon.

All operations are pure functions of immutable values and are safe to
call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import BehindCameraError, HorizonError

# lambda1 threshold below which a ray is considered parallel to the road;
# bounds ground depth at 1e6 * h and keeps downstream algebra well away
# from catastrophic cancellation.
EPS_HORIZON = 1e-6

Pixel = Sequence[float]


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters: focal lengths and principal point, in pixels."""

    fx: float
    fy: float
    u0: float
    v0: float

    def __post_init__(self):
        if not (math.isfinite(self.fx) and self.fx > 0):
            raise ValueError(f"fx must be finite and positive, got {self.fx}")
        if not (math.isfinite(self.fy) and self.fy > 0):
            raise ValueError(f"fy must be finite and positive, got {self.fy}")
        if not (math.isfinite(self.u0) and math.isfinite(self.v0)):
            raise ValueError(f"principal point must be finite, got ({self.u0}, {self.v0})")

    @property
    def matrix(self) -> np.ndarray:
        """3x3 intrinsic matrix."""
        return np.array(
            [[self.fx, 0.0, self.u0], [0.0, self.fy, self.v0], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class MountConfig:
    """Camera mounting: height above the road (m) and roll angle (rad)."""

    h: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.h) and self.h > 0):
            raise ValueError(f"mounting height must be finite and positive, got {self.h}")
        if not (math.isfinite(self.theta) and abs(self.theta) < math.pi / 2):
            raise ValueError(f"|roll angle| must be < pi/2, got {self.theta}")


class GroundPoint(NamedTuple):
    """3D point in the VCS, metres.  Back-projected points have y == h."""

    x: float
    y: float
    z: float


class LambdaTerms(NamedTuple):
    """Ray coefficients plus the two motion-dependent combinations.

    lambda1, lambda2 are dimensionless (y/z and x/z of the viewing ray);
    lambda3 = lambda2*h - lambda1*x_d and lambda4 = h - lambda1*z_d are
    in metres and carry the inter-frame translation.
    """

    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float


def roll_rotation(theta: float) -> np.ndarray:
    """Rotation about the Z axis mapping VCS vectors into the CCS."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]], dtype=np.float64)


def yaw_rotation(phi: float) -> np.ndarray:
    """Rotation about the Y (vertical) axis for the inter-frame vehicle yaw."""
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]], dtype=np.float64)


def lambda12(p: Pixel, k: CameraIntrinsics, theta: float) -> tuple[float, float]:
    """Ground-ray coefficients (lambda1, lambda2) = (y/z, x/z) of the pixel's ray."""
    u, v = float(p[0]), float(p[1])
    a = (u - k.u0) / k.fx
    b = (v - k.v0) / k.fy
    c, s = math.cos(theta), math.sin(theta)
    return a * s + b * c, a * c - b * s


def lambda_terms(
    p: Pixel, k: CameraIntrinsics, m: MountConfig, x_d: float, z_d: float
) -> LambdaTerms:
    """All four lambda coefficients for a pixel and a planar translation."""
    lam1, lam2 = lambda12(p, k, m.theta)
    return LambdaTerms(lam1, lam2, lam2 * m.h - lam1 * x_d, m.h - lam1 * z_d)


def backproject_ground(p: Pixel, k: CameraIntrinsics, m: MountConfig) -> GroundPoint:
    """Intersect the pixel's viewing ray with the road plane y = h.

    Returns (h*lambda2/lambda1, h, h/lambda1).  Raises HorizonError when
    lambda1 <= EPS_HORIZON, i.e. the ray is (nearly) parallel to the road.
    """
    lam1, lam2 = lambda12(p, k, m.theta)
    if lam1 <= EPS_HORIZON:
        raise HorizonError(
            f"pixel ({p[0]}, {p[1]}) is at/above the horizon (lambda1={lam1:.3e})"
        )
    return GroundPoint(m.h * lam2 / lam1, m.h, m.h / lam1)


def project(q, k: CameraIntrinsics, theta: float = 0.0) -> tuple[float, float]:
    """Pinhole projection of a VCS point through the roll-rotated camera.

    Accepts any 3-sequence (x, y, z).  The roll rotation leaves z
    untouched, so the camera-frame depth is q[2]; it must be positive.
    """
    x, y, z = float(q[0]), float(q[1]), float(q[2])
    if z <= 0.0:
        raise BehindCameraError(f"point has non-positive depth z={z}")
    c, s = math.cos(theta), math.sin(theta)
    xc = x * c + y * s
    yc = -x * s + y * c
    return k.fx * xc / z + k.u0, k.fy * yc / z + k.v0
