"""Row-wise analysis of the vertical flow channel and freespace segmentation.

On a flat road with zero roll and straight driving, the vertical flow
F_v depends on the row index alone: rationally for displacement flow,

    f(v) = k * (v - v0)^2 / (1 - k * (v - v0)),    k = z_d / (h * fy)

and quadratically for velocity flow,

    f(v) = k * (v - v0)^2,                          k = v_r / (h * fy).

The pipeline mirrors V-Disparity practice: build a per-row histogram of
F_v and keep the mode bin (robust to obstacle contamination), fit the
row representatives to one of the profiles above, regenerate a fitted
F_v map, and segment freespace by thresholding the residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateFit,
    DimensionMismatch,
    EmptyInput,
    InsufficientRows,
    UnitsMismatch,
)
from .flow_models import FlowMap
from .geometry import CameraIntrinsics

DEFAULT_BIN_W = 0.25        # px, histogram bin width for row projections
DEFAULT_MIN_ROW_SUPPORT = 10  # valid pixels a row needs to report a value
DEFAULT_TAU = 1.0           # px, residual threshold for freespace

FIT_KINDS = ("rational-displacement", "quadratic-velocity", "generic-quadratic")


@dataclass(frozen=True)
class FitConfig:
    """Tunables for the row-projection + curve-fit pipeline."""

    bin_w: float = DEFAULT_BIN_W
    min_row_support: int = DEFAULT_MIN_ROW_SUPPORT
    tau: float = DEFAULT_TAU
    kind: str = "rational-displacement"

    def __post_init__(self):
        if self.bin_w <= 0:
            raise ValueError(f"bin width must be positive, got {self.bin_w}")
        if self.min_row_support < 1:
            raise ValueError(f"min row support must be >= 1, got {self.min_row_support}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.kind not in FIT_KINDS:
            raise ValueError(f"kind must be one of {FIT_KINDS}, got {self.kind!r}")


@dataclass
class RowProjection:
    """Per-row representative of F_v: mode-bin centres for rows with
    enough valid pixels."""

    rows: np.ndarray     # (R,) int, rows that reported a value
    values: np.ndarray   # (R,) float, mode-bin centre of F_v
    support: np.ndarray  # (R,) int, valid pixels in the row
    height: int          # rows of the source map
    units: str


@dataclass
class CurveFit:
    """Fitted F_v profile.

    ``coeffs`` is (k,) for the single-parameter kinds and (a, b, c) for
    the generic quadratic a*v^2 + b*v + c (in raw row coordinates).
    """

    kind: str
    coeffs: tuple[float, ...]
    v0: float
    rms: float
    inliers: int
    units: str

    def predict(self, v):
        """Evaluate the fitted curve at row coordinate(s) v; NaN where the
        rational form is undefined."""
        return _predict(self.kind, self.coeffs, self.v0, np.asarray(v, dtype=np.float64))

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "coeffs": list(self.coeffs),
            "v0": self.v0,
            "rms": self.rms,
            "inliers": self.inliers,
            "units": self.units,
        }


def row_projection(
    f: FlowMap,
    mask: np.ndarray | None = None,
    bin_w: float = DEFAULT_BIN_W,
    min_row_support: int = DEFAULT_MIN_ROW_SUPPORT,
) -> RowProjection:
    """Histogram F_v per row and report a mode-bin representative.

    Bins are anchored at multiples of ``bin_w``; ties go to the lowest
    bin so the result is deterministic and invariant to column order.
    The representative is the mean of the values inside the mode bin
    (within bin_w/2 of the bin centre, and exact on noiseless maps).
    Rows with fewer than ``min_row_support`` valid pixels report nothing.
    """
    valid = f.valid if mask is None else f.valid & np.asarray(mask, dtype=bool)
    if valid.shape != f.valid.shape:
        raise DimensionMismatch(f"mask shape {valid.shape} != map {f.valid.shape}")
    if not valid.any():
        raise EmptyInput("flow map has no valid pixels")

    rows, values, support = [], [], []
    for v in range(f.height):
        vals = f.fv[v, valid[v]]
        if vals.size < min_row_support:
            continue
        bins = np.floor(vals / bin_w).astype(np.int64)
        uniq, inverse, counts = np.unique(bins, return_inverse=True, return_counts=True)
        mode = int(np.argmax(counts))
        rows.append(v)
        values.append(float(vals[inverse == mode].mean()))
        support.append(vals.size)
    return RowProjection(
        rows=np.asarray(rows, dtype=np.int64),
        values=np.asarray(values, dtype=np.float64),
        support=np.asarray(support, dtype=np.int64),
        height=f.height,
        units=f.units,
    )


def _tukey_weights(residuals: np.ndarray) -> np.ndarray:
    """Tukey biweight with c = 3 * RMS of the residuals; all-ones when
    the fit is already exact."""
    rms = float(np.sqrt(np.mean(residuals**2)))
    if rms < 1e-12:
        return np.ones_like(residuals)
    c = 3.0 * rms
    t = residuals / c
    w = (1.0 - t * t) ** 2
    w[np.abs(t) >= 1.0] = 0.0
    return w


def _fit_scalar(g: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    denom = float(np.sum(w * g * g))
    if denom <= 0.0:
        if np.allclose(y, 0.0):
            return 0.0
        raise DegenerateFit("normal equation is singular (sum w*g^2 == 0)")
    return float(np.sum(w * g * y) / denom)


def fit_fv_curve(
    rp: RowProjection, k: CameraIntrinsics, kind: str = "rational-displacement"
) -> CurveFit:
    """Least-squares fit of the row representatives to an F_v profile.

    One ordinary pass followed by one Tukey-reweighted pass (sheds
    obstacle-dominated rows).  The rational and quadratic kinds solve a
    single scalar with v0 taken from the intrinsics; the generic
    quadratic needs at least three populated rows.
    """
    if kind not in FIT_KINDS:
        raise ValueError(f"kind must be one of {FIT_KINDS}, got {kind!r}")
    n = rp.rows.size
    need = 3 if kind == "generic-quadratic" else 1
    if n < need:
        raise InsufficientRows(f"{kind} needs >= {need} populated rows, got {n}")

    v = rp.rows.astype(np.float64)
    y = rp.values
    dv = v - k.v0

    if kind == "generic-quadratic":
        design = np.stack([v * v, v, np.ones_like(v)], axis=1)

        def solve(w):
            a = design * w[:, None]
            gram = a.T @ design
            if np.linalg.matrix_rank(gram) < 3:
                raise DegenerateFit("quadratic normal equations are singular")
            return tuple(np.linalg.solve(gram, a.T @ y))

        coeffs = solve(np.ones(n))
        resid = y - design @ np.asarray(coeffs)
        w = _tukey_weights(resid)
        if np.count_nonzero(w) >= 3:
            coeffs = solve(w)
            resid = y - design @ np.asarray(coeffs)
            w = _tukey_weights(resid)
    else:
        if kind == "rational-displacement":
            # Linearized exactly:  y * (1 - k*dv) = k*dv^2  =>  y = k * g
            g = dv * dv + y * dv
        else:
            g = dv * dv

        ones = np.ones(n)
        kk = _fit_scalar(g, y, ones)
        coeffs = (kk,)
        _check_rational_domain(kind, coeffs, dv)
        resid = y - _predict(kind, coeffs, k.v0, v)
        w = _tukey_weights(resid)
        if np.count_nonzero(w) >= 1:
            kk = _fit_scalar(g, y, w)
            coeffs = (kk,)
            _check_rational_domain(kind, coeffs, dv)
            resid = y - _predict(kind, coeffs, k.v0, v)
            w = _tukey_weights(resid)

    inlier = w > 0.0
    rms = float(np.sqrt(np.mean(resid[inlier] ** 2))) if inlier.any() else float("inf")
    return CurveFit(
        kind=kind,
        coeffs=tuple(float(c) for c in coeffs),
        v0=float(k.v0),
        rms=rms,
        inliers=int(np.count_nonzero(inlier)),
        units=rp.units,
    )


def _check_rational_domain(kind, coeffs, dv):
    if kind == "rational-displacement" and np.any(1.0 - coeffs[0] * dv <= 0.0):
        raise DegenerateFit(
            f"rational fit k={coeffs[0]:.3e} has non-positive denominator in the row range"
        )


def _predict(kind, coeffs, v0, v):
    if kind == "rational-displacement":
        kk = coeffs[0]
        denom = 1.0 - kk * (v - v0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(denom > 0, kk * (v - v0) ** 2 / denom, np.nan)
    if kind == "quadratic-velocity":
        return coeffs[0] * (v - v0) ** 2
    a, b, c = coeffs
    return a * v * v + b * v + c


def render_fitted_fv(fit: CurveFit, width: int, height: int) -> FlowMap:
    """F_v map regenerated from the fitted curve: constant along each row,
    zero in the horizontal channel.  Rows where the curve is undefined
    (rational denominator <= 0) are invalid."""
    v = np.arange(height, dtype=np.float64)
    profile = fit.predict(v)
    good = np.isfinite(profile)
    fv = np.where(good, profile, 0.0)[:, None] * np.ones((1, width))
    valid = np.broadcast_to(good[:, None], (height, width)).copy()
    return FlowMap(np.zeros((height, width)), fv, valid, fit.units)


def segment_freespace(observed: FlowMap, fitted: FlowMap, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Freespace mask: pixels valid in both maps whose vertical flow is
    within ``tau`` pixels of the fitted profile."""
    if observed.valid.shape != fitted.valid.shape:
        raise DimensionMismatch(
            f"observed {observed.valid.shape} vs fitted {fitted.valid.shape}"
        )
    if observed.units != fitted.units:
        raise UnitsMismatch(f"observed {observed.units!r} vs fitted {fitted.units!r}")
    return observed.valid & fitted.valid & (np.abs(observed.fv - fitted.fv) <= tau)
