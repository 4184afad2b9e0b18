"""Vehicle pose recovery from observed freespace flow.

Inverts the displacement model: searches for the (x_d, z_d, phi) whose
predicted road-plane flow best matches an observed flow map, using
global-best particle swarm optimization with a constriction-style
parameterization.  The objective is the mean endpoint error over the
masked pixels; pixels where a candidate's model is undefined (driven
past, or above the horizon) contribute a fixed penalty so the search
stays out of degenerate regions without NaNs.

Fixed seed and config give an identical estimate; the best cost is
non-increasing across iterations by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyOverlap, NonFinite
from .flow_models import FlowMap, PoseDelta
from .geometry import EPS_HORIZON, CameraIntrinsics, MountConfig

# Cost charged per pixel where the candidate model has no value.
UNDEFINED_PENALTY = 1e3  # px

# Improvement window for convergence: done when the best cost improved
# by less than the tolerance over this many iterations.
_CONVERGENCE_WINDOW = 20


@dataclass(frozen=True)
class PoseSearchConfig:
    """Search bounds and swarm hyperparameters."""

    x_d_bounds: tuple[float, float] = (-1.0, 1.0)
    z_d_bounds: tuple[float, float] = (0.0, 5.0)
    phi_bounds: tuple[float, float] = (-math.radians(10.0), math.radians(10.0))
    swarm_size: int = 50
    max_iters: int = 200
    omega: float = 0.729
    c1: float = 1.49445
    c2: float = 1.49445
    tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        for name in ("x_d_bounds", "z_d_bounds", "phi_bounds"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"{name} must be a well-ordered interval, got ({lo}, {hi})")
        if self.swarm_size < 2:
            raise ValueError(f"swarm size must be >= 2, got {self.swarm_size}")
        if self.max_iters < 1:
            raise ValueError(f"iteration cap must be >= 1, got {self.max_iters}")
        if min(self.omega, self.c1, self.c2) <= 0:
            raise ValueError("omega, c1, c2 must all be positive")
        if self.tol < 0:
            raise ValueError(f"tolerance must be >= 0, got {self.tol}")

    @property
    def bounds(self) -> np.ndarray:
        return np.array([self.x_d_bounds, self.z_d_bounds, self.phi_bounds],
                        dtype=np.float64)


@dataclass
class PoseEstimate:
    pose: PoseDelta
    cost: float          # px, mean endpoint error of the best candidate
    iterations: int
    converged: bool

    def to_json(self) -> dict:
        return {
            "pose": {"x_d": self.pose.x_d, "z_d": self.pose.z_d, "phi": self.pose.phi},
            "cost": self.cost,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass
class _Observation:
    """Masked pixel data precomputed once per search."""

    lam1: np.ndarray     # (P,) ray coefficients of below-horizon pixels
    lam2: np.ndarray
    fu: np.ndarray       # (P,) observed flow at those pixels
    fv: np.ndarray
    n_total: int         # masked pixel count including always-undefined ones
    n_horizon: int       # masked pixels at/above the horizon (constant penalty)
    k: CameraIntrinsics
    m: MountConfig
    ct: float = field(init=False)
    st: float = field(init=False)

    def __post_init__(self):
        self.ct = math.cos(self.m.theta)
        self.st = math.sin(self.m.theta)


def _prepare(observed: FlowMap, mask: np.ndarray, k: CameraIntrinsics,
             m: MountConfig) -> _Observation:
    sel = observed.valid & np.asarray(mask, dtype=bool)
    n_total = int(np.count_nonzero(sel))
    if n_total == 0:
        raise EmptyOverlap("mask selects no valid pixel of the observed map")
    vv, uu = np.nonzero(sel)
    a = (uu.astype(np.float64) - k.u0) / k.fx
    b = (vv.astype(np.float64) - k.v0) / k.fy
    ct, st = math.cos(m.theta), math.sin(m.theta)
    lam1 = a * st + b * ct
    lam2 = a * ct - b * st
    below = lam1 > EPS_HORIZON
    return _Observation(
        lam1=lam1[below],
        lam2=lam2[below],
        fu=observed.fu[sel][below],
        fv=observed.fv[sel][below],
        n_total=n_total,
        n_horizon=n_total - int(np.count_nonzero(below)),
        k=k,
        m=m,
    )


def _costs(poses: np.ndarray, obs: _Observation) -> np.ndarray:
    """Mean endpoint error of each pose row (S, 3) against the observation."""
    x_d = poses[:, 0:1]
    z_d = poses[:, 1:2]
    phi = poses[:, 2:3]
    lam1 = obs.lam1[None, :]
    lam2 = obs.lam2[None, :]
    h = obs.m.h

    lam3 = lam2 * h - lam1 * x_d
    lam4 = h - lam1 * z_d
    cp = np.cos(phi)
    sp = np.sin(phi)
    denom = lam3 * sp + lam4 * cp
    defined = denom > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        gu = (lam3 * cp - lam4 * sp) / denom - lam2
        gv = lam1 * h / denom - lam1
    fu = obs.k.fx * (gu * obs.ct + gv * obs.st)
    fv = obs.k.fy * (-gu * obs.st + gv * obs.ct)
    err = np.hypot(fu - obs.fu[None, :], fv - obs.fv[None, :])
    err = np.where(defined, err, UNDEFINED_PENALTY)
    total = err.sum(axis=1) + UNDEFINED_PENALTY * obs.n_horizon
    return total / obs.n_total


def pose_cost(
    candidate: PoseDelta,
    observed: FlowMap,
    mask: np.ndarray,
    k: CameraIntrinsics,
    m: MountConfig,
) -> float:
    """Mean endpoint error (px) of the candidate's predicted flow against
    the observation, with undefined pixels charged the fixed penalty."""
    obs = _prepare(observed, mask, k, m)
    pose = np.array([[candidate.x_d, candidate.z_d, candidate.phi]], dtype=np.float64)
    return float(_costs(pose, obs)[0])


def estimate_pose(
    observed: FlowMap,
    mask: np.ndarray,
    k: CameraIntrinsics,
    m: MountConfig,
    cfg: PoseSearchConfig | None = None,
) -> PoseEstimate:
    """Global-best PSO over (x_d, z_d, phi) within the configured bounds.

    Velocities are clamped to 20% of each bound range per iteration and
    positions clipped to the bounds.  Particle 0 acts as a
    guaranteed-convergence scout sampling an adaptive neighborhood of
    the global best, which keeps refinement going after the swarm
    collapses.  ``converged`` reports whether the best cost improved by
    less than the tolerance over the last 20 iterations; the search
    stops early once that holds and the scout radius is exhausted.
    Ties in the global best go to the lowest particle index, so the
    result is deterministic for a fixed seed.
    """
    cfg = cfg or PoseSearchConfig()
    obs = _prepare(observed, mask, k, m)
    bounds = cfg.bounds
    lo, hi = bounds[:, 0], bounds[:, 1]
    vmax = 0.2 * (hi - lo)

    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    pos = rng.uniform(lo, hi, size=(cfg.swarm_size, 3))
    vel = rng.uniform(-vmax, vmax, size=(cfg.swarm_size, 3))

    cost = _costs(pos, obs)
    if not np.isfinite(cost).any():
        raise NonFinite("no particle produced a finite cost; inputs are inconsistent")
    pbest = pos.copy()
    pbest_cost = cost.copy()
    g = int(np.argmin(pbest_cost))
    gbest = pbest[g].copy()
    gbest_cost = float(pbest_cost[g])

    # Guaranteed-convergence scout: particle 0 samples an adaptive
    # neighborhood of the global best, so the search keeps refining even
    # after the rest of the swarm has collapsed onto one point.
    rho = 0.1
    succ = fail = 0

    history = [gbest_cost]
    iterations = 0
    converged = False
    for _ in range(cfg.max_iters):
        iterations += 1
        r1 = rng.random((cfg.swarm_size, 3))
        r2 = rng.random((cfg.swarm_size, 3))
        vel = (cfg.omega * vel
               + cfg.c1 * r1 * (pbest - pos)
               + cfg.c2 * r2 * (gbest[None, :] - pos))
        np.clip(vel, -vmax, vmax, out=vel)
        moved = pos + vel
        pos = np.clip(moved, lo, hi)
        vel[moved != pos] = 0.0  # kill momentum into a bound
        pos[0] = np.clip(gbest + rho * (hi - lo) * (2.0 * rng.random(3) - 1.0),
                         lo, hi)

        cost = _costs(pos, obs)
        improved = cost < pbest_cost
        pbest[improved] = pos[improved]
        pbest_cost[improved] = cost[improved]
        g = int(np.argmin(pbest_cost))
        if pbest_cost[g] < gbest_cost:
            gbest = pbest[g].copy()
            gbest_cost = float(pbest_cost[g])
            succ += 1
            fail = 0
            if succ >= 5:
                rho = min(2.0 * rho, 0.5)
                succ = 0
        else:
            fail += 1
            succ = 0
            if fail >= 3:
                rho = max(0.5 * rho, 1e-16)
                fail = 0

        history.append(gbest_cost)
        converged = (len(history) > _CONVERGENCE_WINDOW
                     and history[-1 - _CONVERGENCE_WINDOW] - history[-1] < cfg.tol)
        # an early plateau can still be escaped while the scout has room
        # to move; only quit once its radius is exhausted too
        if converged and rho <= 1e-12:
            break

    return PoseEstimate(
        pose=PoseDelta(x_d=float(gbest[0]), z_d=float(gbest[1]), phi=float(gbest[2])),
        cost=gbest_cost,
        iterations=iterations,
        converged=converged,
    )
