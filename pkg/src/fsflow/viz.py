"""Flow visualization with the standard optical-flow color wheel.

Follows the Middlebury convention (Baker et al. color coding, after the
original C++ of Daniel Scharstein and the Matlab port of Deqing Sun):
hue encodes direction, saturation encodes magnitude relative to the
normalization maximum.  The maximum used is recorded in a PNG tEXt
metadata chunk so renders stay comparable.
"""

from __future__ import annotations

import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

from .flow_models import FlowMap


def make_colorwheel() -> np.ndarray:
    """(55, 3) RGB color wheel spanning the six hue transitions."""
    RY, YG, GC, CB, BM, MR = 15, 6, 4, 11, 13, 6
    ncols = RY + YG + GC + CB + BM + MR
    wheel = np.zeros((ncols, 3))
    col = 0
    # RY
    wheel[0:RY, 0] = 255
    wheel[0:RY, 1] = np.floor(255 * np.arange(RY) / RY)
    col += RY
    # YG
    wheel[col : col + YG, 0] = 255 - np.floor(255 * np.arange(YG) / YG)
    wheel[col : col + YG, 1] = 255
    col += YG
    # GC
    wheel[col : col + GC, 1] = 255
    wheel[col : col + GC, 2] = np.floor(255 * np.arange(GC) / GC)
    col += GC
    # CB
    wheel[col : col + CB, 1] = 255 - np.floor(255 * np.arange(CB) / CB)
    wheel[col : col + CB, 2] = 255
    col += CB
    # BM
    wheel[col : col + BM, 2] = 255
    wheel[col : col + BM, 0] = np.floor(255 * np.arange(BM) / BM)
    col += BM
    # MR
    wheel[col : col + MR, 2] = 255 - np.floor(255 * np.arange(MR) / MR)
    wheel[col : col + MR, 0] = 255
    return wheel


def flow_to_color(
    fu: np.ndarray,
    fv: np.ndarray,
    valid: np.ndarray | None = None,
    max_flow: float | None = None,
) -> tuple[np.ndarray, float]:
    """Map a flow field to (H, W, 3) uint8 RGB; returns the image and the
    magnitude used for normalization.  Invalid pixels render black."""
    fu = np.asarray(fu, dtype=np.float64)
    fv = np.asarray(fv, dtype=np.float64)
    if valid is None:
        valid = np.ones(fu.shape, dtype=bool)
    rad = np.hypot(fu, fv)
    if max_flow is None:
        max_flow = float(rad[valid].max()) if valid.any() else 0.0
    scale = max_flow if max_flow > 0 else 1.0
    u = np.where(valid, fu / scale, 0.0)
    v = np.where(valid, fv / scale, 0.0)
    rad = np.hypot(u, v)

    wheel = make_colorwheel()
    ncols = wheel.shape[0]
    angle = np.arctan2(-v, -u) / np.pi
    fk = (angle + 1) / 2 * (ncols - 1)
    k0 = np.floor(fk).astype(np.int32)
    k1 = (k0 + 1) % ncols
    frac = fk - k0

    img = np.zeros(fu.shape + (3,), dtype=np.uint8)
    for i in range(3):
        col0 = wheel[k0, i] / 255.0
        col1 = wheel[k1, i] / 255.0
        col = (1 - frac) * col0 + frac * col1
        inside = rad <= 1
        col[inside] = 1 - rad[inside] * (1 - col[inside])
        col[~inside] *= 0.75
        img[:, :, i] = np.floor(255 * col)
    img[~valid] = 0
    return img, max_flow


def save_flow_viz(f: FlowMap, path, max_flow: float | None = None) -> float:
    """Write the color-wheel rendering of a flow map as a PNG whose text
    chunk records the normalization magnitude and the units tag."""
    rgb, used_max = flow_to_color(f.fu, f.fv, f.valid, max_flow)
    meta = PngInfo()
    meta.add_text("flow-max-magnitude", repr(used_max))
    meta.add_text("flow-units", f.units)
    Image.fromarray(rgb, mode="RGB").save(path, pnginfo=meta)
    return used_max


def save_error_viz(gt: FlowMap, est: FlowMap, path,
                   mask=None, max_error: float | None = None) -> float:
    """Write a grayscale endpoint-error magnitude image (bright = large
    error); the normalization maximum goes into the PNG text chunk."""
    sel = gt.valid & est.valid
    if mask is not None:
        sel = sel & np.asarray(mask, dtype=bool)
    err = np.hypot(gt.fu - est.fu, gt.fv - est.fv)
    if max_error is None:
        max_error = float(err[sel].max()) if sel.any() else 0.0
    scale = max_error if max_error > 0 else 1.0
    gray = np.zeros(err.shape, dtype=np.uint8)
    gray[sel] = np.clip(err[sel] / scale * 255.0, 0, 255).astype(np.uint8)
    meta = PngInfo()
    meta.add_text("error-max-magnitude", repr(max_error))
    meta.add_text("flow-units", gt.units)
    Image.fromarray(gray, mode="L").save(path, pnginfo=meta)
    return max_error
