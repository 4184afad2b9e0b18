"""Flow-map evaluation metrics over a masked region.

Four error measures between a ground-truth map F and an estimate F^:

* e_A - mean angle between the 1-augmented vectors (F, 1) and (F^, 1)
  (Barron convention); the arccos argument is clamped to [-1, 1] so
  floating-point overshoot never yields NaN;
* e_E - mean Euclidean endpoint error |F - F^|;
* e_U / e_V - mean absolute per-channel errors.

The evaluated set is the user mask intersected with both validity
masks.  Sums use numpy's pairwise summation, so single-threaded results
are reproducible to better than 1e-12.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyOverlap, UnitsMismatch
from .flow_models import FlowMap


@dataclass
class MetricsReport:
    """Aggregate errors over the evaluated pixels.  Angles are radians
    (per frame or per second, matching the maps' units tag)."""

    e_a: float
    e_e: float
    e_u: float
    e_v: float
    n: int
    units: str

    def to_json(self) -> dict:
        return {
            "e_A": self.e_a,
            "e_E": self.e_e,
            "e_U": self.e_u,
            "e_V": self.e_v,
            "n": self.n,
            "units": self.units,
        }


def evaluate(gt: FlowMap, est: FlowMap, mask: np.ndarray | None = None) -> MetricsReport:
    """Compute all four metrics of ``est`` against ``gt`` on the mask."""
    if gt.valid.shape != est.valid.shape:
        raise DimensionMismatch(f"gt {gt.valid.shape} vs est {est.valid.shape}")
    if gt.units != est.units:
        raise UnitsMismatch(f"gt units {gt.units!r} vs est units {est.units!r}")
    m = gt.valid & est.valid
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != m.shape:
            raise DimensionMismatch(f"mask {mask.shape} vs maps {m.shape}")
        m = m & mask
    n = int(np.count_nonzero(m))
    if n == 0:
        raise EmptyOverlap("no valid pixel in common between mask and both maps")

    gu, gv = gt.fu[m], gt.fv[m]
    eu, ev = est.fu[m], est.fv[m]

    du = gu - eu
    dv = gv - ev
    e_e = float(np.mean(np.hypot(du, dv)))
    e_u = float(np.mean(np.abs(du)))
    e_v = float(np.mean(np.abs(dv)))

    inner = gu * eu + gv * ev + 1.0
    norms = np.sqrt((gu * gu + gv * gv + 1.0) * (eu * eu + ev * ev + 1.0))
    e_a = float(np.mean(np.arccos(np.clip(inner / norms, -1.0, 1.0))))

    return MetricsReport(e_a=e_a, e_e=e_e, e_u=e_u, e_v=e_v, n=n, units=gt.units)
