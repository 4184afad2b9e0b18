"""Closed-form optical flow of the road plane.

Two families of models, chosen by how the flow data is encoded:

* displacement flow, in pixels per frame, driven by the inter-frame
  pose change ``PoseDelta`` (translation x_d, z_d and yaw phi);
* velocity flow, in pixels per second, driven by the instantaneous
  Ackermann state ``VelocityState`` (rear-axle speed, steering angle,
  wheelbase).

Each family has a full form and simplified special cases for straight
driving (yaw and lateral drift negligible) and additionally zero roll.
``render_flow_map`` rasterizes any of them into a dense ``FlowMap``.

Every per-pixel function is a pure function of its inputs; rendering is
single-pass vectorized numpy and bit-identical across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, HorizonError, PointBehindCameraError
from .geometry import EPS_HORIZON, CameraIntrinsics, MountConfig, Pixel, lambda12

UNITS_DISPLACEMENT = "px"
UNITS_VELOCITY = "px/s"

MODEL_NAMES = ("full-disp", "full-vel", "simple-disp", "simple-vel", "simplest")


@dataclass(frozen=True)
class PoseDelta:
    """Inter-frame vehicle motion: translation (x_d, 0, z_d) metres, yaw phi rad.

    The vertical translation is identically zero: the camera keeps a
    fixed height above the road plane.
    """

    x_d: float = 0.0
    z_d: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if not all(map(math.isfinite, (self.x_d, self.z_d, self.phi))):
            raise ValueError(f"pose delta must be finite, got {self}")


@dataclass(frozen=True)
class VelocityState:
    """Ackermann state: rear-axle speed v_r (m/s), front steering angle
    delta_f (rad), wheelbase l (m), and current heading (rad)."""

    v_r: float
    delta_f: float = 0.0
    l: float = 2.7
    heading: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.l) and self.l > 0):
            raise ValueError(f"wheelbase must be positive, got {self.l}")
        if not (math.isfinite(self.delta_f) and abs(self.delta_f) < math.pi / 2):
            raise ValueError(f"|steering angle| must be < pi/2, got {self.delta_f}")
        if not (math.isfinite(self.v_r) and math.isfinite(self.heading)):
            raise ValueError(f"speed and heading must be finite, got {self}")


class FlowVector(NamedTuple):
    """Per-pixel flow: horizontal and vertical components."""

    fu: float
    fv: float


@dataclass
class FlowMap:
    """Dense two-channel flow field with a validity mask and a units tag.

    ``fu``/``fv`` are (H, W) float64, finite wherever ``valid`` is true.
    ``units`` is "px" (displacement per frame) or "px/s" (velocity);
    operations that combine maps refuse to mix units.
    """

    fu: np.ndarray
    fv: np.ndarray
    valid: np.ndarray
    units: str = UNITS_DISPLACEMENT

    def __post_init__(self):
        self.fu = np.asarray(self.fu, dtype=np.float64)
        self.fv = np.asarray(self.fv, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if not (self.fu.ndim == 2 and self.fu.shape == self.fv.shape == self.valid.shape):
            raise DimensionMismatch(
                f"channel shapes disagree: fu {self.fu.shape}, fv {self.fv.shape}, "
                f"valid {self.valid.shape}"
            )
        if self.units not in (UNITS_DISPLACEMENT, UNITS_VELOCITY):
            raise ValueError(f"units must be 'px' or 'px/s', got {self.units!r}")

    @property
    def height(self) -> int:
        return self.fu.shape[0]

    @property
    def width(self) -> int:
        return self.fu.shape[1]

    def copy(self) -> "FlowMap":
        return FlowMap(self.fu.copy(), self.fv.copy(), self.valid.copy(), self.units)


def _check_above_horizon(lam1: float, p: Pixel) -> None:
    if lam1 <= EPS_HORIZON:
        raise HorizonError(
            f"pixel ({p[0]}, {p[1]}) is at/above the horizon (lambda1={lam1:.3e})"
        )


def displacement_flow(
    p: Pixel, k: CameraIntrinsics, m: MountConfig, d: PoseDelta
) -> FlowVector:
    """Full displacement model: flow of a road pixel under (x_d, z_d, phi).

    Closed form of back-project -> rigid transform -> re-project:

        f = M @ [ (l3*cos(phi) - l4*sin(phi)) / D - lambda2,
                  lambda1*h / D - lambda1 ]
        D = l3*sin(phi) + l4*cos(phi)           (second-frame depth * lambda1)
        M = [[ fx*cos(theta), fx*sin(theta)],
             [-fy*sin(theta), fy*cos(theta)]]

    D must be positive: a point the vehicle has driven past has no image
    in the second frame.
    """
    lam1, lam2 = lambda12(p, k, m.theta)
    _check_above_horizon(lam1, p)
    lam3 = lam2 * m.h - lam1 * d.x_d
    lam4 = m.h - lam1 * d.z_d
    cp, sp = math.cos(d.phi), math.sin(d.phi)
    denom = lam3 * sp + lam4 * cp
    if denom <= 0.0:
        raise PointBehindCameraError(
            f"ground point behind camera after motion (depth term {denom:.3e} <= 0)"
        )
    gu = (lam3 * cp - lam4 * sp) / denom - lam2
    gv = lam1 * m.h / denom - lam1
    ct, st = math.cos(m.theta), math.sin(m.theta)
    return FlowVector(k.fx * (gu * ct + gv * st), k.fy * (-gu * st + gv * ct))


def ackermann_rates(s: VelocityState) -> tuple[float, float, float]:
    """Ackermann kinematics: (yaw rate, lateral speed, forward speed).

    phi_dot = v_r * tan(delta_f) / l;  x_dot = v_r * sin(heading);
    z_dot = v_r * cos(heading).  In the vehicle-attached frame the
    heading is zero at the current instant, giving (phi_dot, 0, v_r).
    """
    phi_dot = s.v_r * math.tan(s.delta_f) / s.l
    return phi_dot, s.v_r * math.sin(s.heading), s.v_r * math.cos(s.heading)


def velocity_flow(
    p: Pixel, k: CameraIntrinsics, m: MountConfig, s: VelocityState
) -> FlowVector:
    """Full velocity model: apparent pixel velocity (px/s) of a road pixel.

    The zero-interval limit of the displacement model under Ackermann
    motion, taken in the vehicle-attached frame (instantaneous heading 0):

        f = (v_r/h) * M @ [ lambda1*lambda2 - h*(1 + lambda2^2)*tan(delta_f)/l,
                            lambda1^2 - lambda1*lambda2*h*tan(delta_f)/l ]
    """
    lam1, lam2 = lambda12(p, k, m.theta)
    _check_above_horizon(lam1, p)
    tdl = math.tan(s.delta_f) / s.l
    scale = s.v_r / m.h
    gu = scale * (lam1 * lam2 - m.h * (1.0 + lam2 * lam2) * tdl)
    gv = scale * (lam1 * lam1 - lam1 * lam2 * m.h * tdl)
    ct, st = math.cos(m.theta), math.sin(m.theta)
    return FlowVector(k.fx * (gu * ct + gv * st), k.fy * (-gu * st + gv * ct))


def displacement_flow_simplified(
    p: Pixel, k: CameraIntrinsics, m: MountConfig, z_d: float
) -> FlowVector:
    """Displacement model for straight driving (phi = 0, x_d = 0):

        f = lambda1 * z_d / (h - lambda1 * z_d) * [u - u0, v - v0]

    The denominator h - lambda1*z_d is the second-frame depth scaled by
    lambda1 and must stay positive (this also covers z_d <= 0, where the
    point only recedes).
    """
    lam1, _ = lambda12(p, k, m.theta)
    _check_above_horizon(lam1, p)
    denom = m.h - lam1 * z_d
    if denom <= 0.0:
        raise PointBehindCameraError(
            f"forward step z_d={z_d} drives past the ground point (h - lambda1*z_d <= 0)"
        )
    factor = lam1 * z_d / denom
    return FlowVector(factor * (float(p[0]) - k.u0), factor * (float(p[1]) - k.v0))


def velocity_flow_simplified(
    p: Pixel, k: CameraIntrinsics, m: MountConfig, v_r: float
) -> FlowVector:
    """Velocity model with negligible steering (delta_f = 0):

        f = (v_r * lambda1 / h) * [u - u0, v - v0]
    """
    lam1, _ = lambda12(p, k, m.theta)
    _check_above_horizon(lam1, p)
    factor = v_r * lam1 / m.h
    return FlowVector(factor * (float(p[0]) - k.u0), factor * (float(p[1]) - k.v0))


def simplest_flows(
    p: Pixel,
    k: CameraIntrinsics,
    h: float,
    z_d: float | None = None,
    v_r: float | None = None,
) -> FlowVector:
    """Simplest special case: zero roll, straight driving.

    Pass exactly one of ``z_d`` (displacement variant, px/frame) or
    ``v_r`` (velocity variant, px/s):

        f_d = z_d / (h*fy/(v - v0) - z_d) * [u - u0, v - v0]
        f_v = v_r * (v - v0) / (h * fy) * [u - u0, v - v0]

    The vertical component of the velocity variant is quadratic in v.
    """
    if (z_d is None) == (v_r is None):
        raise ValueError("pass exactly one of z_d or v_r")
    u, v = float(p[0]), float(p[1])
    lam1 = (v - k.v0) / k.fy
    _check_above_horizon(lam1, p)
    if z_d is not None:
        denom = h - lam1 * z_d
        if denom <= 0.0:
            raise PointBehindCameraError(
                f"forward step z_d={z_d} drives past the ground point"
            )
        factor = lam1 * z_d / denom
    else:
        factor = v_r * lam1 / h
    return FlowVector(factor * (u - k.u0), factor * (v - k.v0))


# ---------------------------------------------------------------------------
# Dense rendering
# ---------------------------------------------------------------------------


def _lambda_grids(width, height, k, theta):
    """(H, W) grids of lambda1/lambda2 at integer pixel coordinates."""
    a = (np.arange(width, dtype=np.float64) - k.u0) / k.fx
    b = (np.arange(height, dtype=np.float64) - k.v0) / k.fy
    c, s = math.cos(theta), math.sin(theta)
    lam1 = a[None, :] * s + b[:, None] * c
    lam2 = a[None, :] * c - b[:, None] * s
    return lam1, lam2


def _offset_grids(width, height, k):
    du = np.arange(width, dtype=np.float64) - k.u0
    dv = np.arange(height, dtype=np.float64) - k.v0
    return np.broadcast_to(du[None, :], (height, width)), np.broadcast_to(
        dv[:, None], (height, width)
    )


def _apply_mixing(gu, gv, k, theta):
    c, s = math.cos(theta), math.sin(theta)
    return k.fx * (gu * c + gv * s), k.fy * (-gu * s + gv * c)


def _render_full_disp(width, height, k, m, d: PoseDelta):
    # The full model is a ratio of functions affine in the normalized
    # pixel offsets a = (u-u0)/fx and b = (v-v0)/fy, so the per-axis
    # coefficients are folded up front and the dense pass is only the
    # three affine grids, one division and the validity test.  The
    # scalar displacement_flow() above is the readable reference; the
    # acceptance suite checks the two agree with the projection oracle.
    a = (np.arange(width, dtype=np.float64) - k.u0) / k.fx
    b = (np.arange(height, dtype=np.float64) - k.v0) / k.fy
    c, s = math.cos(m.theta), math.sin(m.theta)
    cp, sp = math.cos(d.phi), math.sin(d.phi)
    h = m.h
    e1 = d.x_d * sp + d.z_d * cp
    e2 = d.z_d * sp - d.x_d * cp

    denom = np.add.outer(b * (-(h * sp * s + e1 * c)) + h * cp,
                         a * (h * sp * c - e1 * s))
    num_u = np.add.outer(
        b * (k.fx * (-h * cp * s * c + e2 * c * c + h * s * c)) - k.fx * h * sp * c,
        a * (k.fx * (h * cp * c * c + e2 * s * c + h * s * s)),
    )
    num_v = np.add.outer(
        b * (k.fy * (h * cp * s * s - e2 * s * c + h * c * c)) + k.fy * h * sp * s,
        a * (k.fy * (-h * cp * s * c - e2 * s * s + h * s * c)),
    )
    lam1 = np.add.outer(b * c, a * s)
    valid = (lam1 > EPS_HORIZON) & (denom > 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        fu = num_u / denom
        fv = num_v / denom
    fu -= (k.fx * a)[None, :]
    fv -= (k.fy * b)[:, None]
    return fu, fv, valid


def _render_full_vel(width, height, k, m, s: VelocityState):
    lam1, lam2 = _lambda_grids(width, height, k, m.theta)
    tdl = math.tan(s.delta_f) / s.l
    scale = s.v_r / m.h
    gu = scale * (lam1 * lam2 - m.h * (1.0 + lam2 * lam2) * tdl)
    gv = scale * (lam1 * lam1 - lam1 * lam2 * m.h * tdl)
    fu, fv = _apply_mixing(gu, gv, k, m.theta)
    return fu, fv, lam1 > EPS_HORIZON


def _render_simple_disp(width, height, k, m, z_d):
    lam1, _ = _lambda_grids(width, height, k, m.theta)
    denom = m.h - lam1 * z_d
    valid = (lam1 > EPS_HORIZON) & (denom > 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = lam1 * z_d / denom
    du, dv = _offset_grids(width, height, k)
    return factor * du, factor * dv, valid


def _render_simple_vel(width, height, k, m, v_r):
    lam1, _ = _lambda_grids(width, height, k, m.theta)
    factor = v_r / m.h * lam1
    du, dv = _offset_grids(width, height, k)
    return factor * du, factor * dv, lam1 > EPS_HORIZON


def render_flow_map(
    k: CameraIntrinsics,
    m: MountConfig,
    motion,
    *,
    width: int | None = None,
    height: int | None = None,
    model: str = "full-disp",
    region: np.ndarray | None = None,
) -> FlowMap:
    """Rasterize one of the closed-form models over a frame or a region.

    ``motion`` is a PoseDelta for the displacement models or a
    VelocityState for the velocity models; ``model`` selects among
    "full-disp", "full-vel", "simple-disp", "simple-vel" and "simplest"
    (for which the variant follows the motion type).  Evaluation is at
    integer pixel coordinates.  Pixels where the model is undefined
    (horizon, point driven past) are marked invalid, never raised.
    """
    if region is not None:
        region = np.asarray(region, dtype=bool)
        if region.ndim != 2:
            raise DimensionMismatch(f"region must be 2D, got shape {region.shape}")
        if width is not None and height is not None and region.shape != (height, width):
            raise DimensionMismatch(
                f"region shape {region.shape} != ({height}, {width})"
            )
        height, width = region.shape
    if width is None or height is None or width <= 0 or height <= 0:
        raise DimensionMismatch("positive width and height (or a region) are required")

    if model not in MODEL_NAMES:
        raise ValueError(f"model must be one of {MODEL_NAMES}, got {model!r}")

    kind = model
    if kind == "simplest":
        # Zero-roll special case: same algebra as the simplified renderers
        # with theta forced to 0; the variant follows the motion type.
        m = MountConfig(h=m.h, theta=0.0)
        kind = "simple-disp" if isinstance(motion, PoseDelta) else "simple-vel"

    if kind in ("full-disp", "simple-disp"):
        if not isinstance(motion, PoseDelta):
            raise TypeError(f"{model} needs a PoseDelta, got {type(motion).__name__}")
        units = UNITS_DISPLACEMENT
        if kind == "full-disp":
            fu, fv, valid = _render_full_disp(width, height, k, m, motion)
        else:
            fu, fv, valid = _render_simple_disp(width, height, k, m, motion.z_d)
    else:
        if not isinstance(motion, VelocityState):
            raise TypeError(f"{model} needs a VelocityState, got {type(motion).__name__}")
        units = UNITS_VELOCITY
        if kind == "full-vel":
            fu, fv, valid = _render_full_vel(width, height, k, m, motion)
        else:
            fu, fv, valid = _render_simple_vel(width, height, k, m, motion.v_r)

    if region is not None:
        valid = valid & region
    fu[~valid] = 0.0
    fv[~valid] = 0.0
    return FlowMap(fu, fv, valid, units)
