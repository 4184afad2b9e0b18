"""Flow-map and mask codecs plus the JSON configuration schema.

Supported file formats:

KITTI flow PNG - 16-bit, 3-channel PNG (dataset devkit convention):

    channel   content                     decode
    -------   -------------------------   -------------------------
    R         horizontal flow, encoded    fu = (raw - 2^15) / 64.0
    G         vertical flow, encoded      fv = (raw - 2^15) / 64.0
    B         validity                    valid iff raw != 0

    Writing is the exact inverse with round-to-nearest; values outside
    the representable range [-512, (2^15 - 1)/64] saturate with a
    warning.  Invalid pixels are written as zero flow.

Middlebury .flo - little-endian: float32 magic 202021.25, int32 width,
    int32 height, then row-major interleaved (fu, fv) float32 pairs.
    The format has no validity channel; invalid pixels are written as
    NaN and NaN decodes back to invalid.

Mask PNG - 8-bit single-channel; nonzero = freespace.

Neither flow format encodes units, so every write drops a sidecar JSON
(``<path>.meta.json``) carrying the units tag; reads pick it up when
present and default to displacement ("px") otherwise.

Codecs are stateless; concurrent reads of distinct files are safe.
"""

from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import (
    BadMagic,
    ConfigError,
    TruncatedFile,
    WrongBitDepth,
    WrongChannelCount,
)
from .fitting import FitConfig
from .flow_models import FlowMap, PoseDelta, VelocityState
from .geometry import CameraIntrinsics, MountConfig
from .pose_estimation import PoseSearchConfig
from .scene_synth import NoiseSpec, SceneSpec

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
FLO_MAGIC = 202021.25

_KITTI_OFFSET = 2**15
_KITTI_SCALE = 64.0


class FlowFileFormat(enum.Enum):
    """Supported on-disk formats; each codec round-trips losslessly
    within its representable range."""

    KITTI_PNG16 = "kitti-png16"
    MIDDLEBURY_FLO = "middlebury-flo"
    MASK_PNG8 = "mask-png8"


def flow_format_for(path) -> FlowFileFormat:
    """Flow format implied by a file extension (.png or .flo)."""
    suffix = Path(path).suffix.lower()
    if suffix == ".flo":
        return FlowFileFormat.MIDDLEBURY_FLO
    if suffix == ".png":
        return FlowFileFormat.KITTI_PNG16
    raise ConfigError(f"unsupported flow extension {suffix!r} (use .flo or .png)")


def _sidecar_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def _write_sidecar(path, units: str, extra: dict | None = None) -> None:
    meta = {"units": units}
    if extra:
        meta.update(extra)
    _sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n")


def _read_sidecar_units(path, default: str = "px") -> str:
    sidecar = _sidecar_path(path)
    if sidecar.is_file():
        try:
            meta = json.loads(sidecar.read_text())
            return str(meta.get("units", default))
        except (json.JSONDecodeError, OSError):
            return default
    return default


def _decode_png(data: bytes) -> np.ndarray:
    if len(data) < len(PNG_SIGNATURE) or not data.startswith(PNG_SIGNATURE):
        raise BadMagic("not a PNG file (bad signature)")
    img = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise TruncatedFile("PNG payload is truncated or corrupt")
    return img


def read_kitti_png(path) -> FlowMap:
    """Read a KITTI-convention 16-bit flow PNG."""
    img = _decode_png(Path(path).read_bytes())
    if img.dtype != np.uint16:
        raise WrongBitDepth(f"expected 16-bit samples, got {img.dtype}")
    if img.ndim != 3 or img.shape[2] != 3:
        raise WrongChannelCount(f"expected 3 channels, got shape {img.shape}")
    # cv2 decodes channels in BGR order; the devkit layout is RGB.
    valid = img[:, :, 0] != 0
    fv = (img[:, :, 1].astype(np.float64) - _KITTI_OFFSET) / _KITTI_SCALE
    fu = (img[:, :, 2].astype(np.float64) - _KITTI_OFFSET) / _KITTI_SCALE
    fu[~valid] = 0.0
    fv[~valid] = 0.0
    return FlowMap(fu, fv, valid, _read_sidecar_units(path))


def write_kitti_png(f: FlowMap, path) -> None:
    """Write a KITTI-convention 16-bit flow PNG (plus units sidecar)."""
    lo = (0.0 - _KITTI_OFFSET) / _KITTI_SCALE
    hi = (2.0**16 - 1.0 - _KITTI_OFFSET) / _KITTI_SCALE
    flows = np.stack([f.fu, f.fv])
    clipped = flows[:, f.valid]
    if clipped.size and (clipped.min() < lo or clipped.max() > hi):
        warnings.warn(
            f"flow outside the representable range [{lo}, {hi}] px; saturating",
            stacklevel=2,
        )
    raw = np.rint(flows * _KITTI_SCALE + _KITTI_OFFSET)
    raw = np.clip(raw, 0, 2**16 - 1).astype(np.uint16)
    raw[:, ~f.valid] = _KITTI_OFFSET  # zero flow at invalid pixels
    img = np.zeros((f.height, f.width, 3), dtype=np.uint16)
    img[:, :, 0] = f.valid.astype(np.uint16)  # B: validity
    img[:, :, 1] = raw[1]                     # G: vertical
    img[:, :, 2] = raw[0]                     # R: horizontal
    ok, buf = cv2.imencode(".png", img)
    if not ok:
        raise OSError(f"PNG encoding failed for {path}")
    Path(path).write_bytes(buf.tobytes())
    _write_sidecar(path, f.units)


def read_flo(path) -> FlowMap:
    """Read a Middlebury .flo file; NaN samples decode to invalid pixels."""
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise TruncatedFile(f"{path}: shorter than the magic number")
    magic = np.frombuffer(data, dtype="<f4", count=1)[0]
    if not (math.isfinite(magic) and abs(magic - FLO_MAGIC) < 1e-3):
        raise BadMagic(f"{path}: magic {magic!r} != {FLO_MAGIC}")
    if len(data) < 12:
        raise TruncatedFile(f"{path}: header is incomplete")
    width, height = (int(x) for x in np.frombuffer(data, dtype="<i4", count=2, offset=4))
    if width <= 0 or height <= 0 or width * height > 10**9:
        raise TruncatedFile(f"{path}: implausible dimensions {width}x{height}")
    expected = 12 + 8 * width * height
    if len(data) < expected:
        raise TruncatedFile(f"{path}: {len(data)} bytes, expected {expected}")
    payload = np.frombuffer(data, dtype="<f4", count=2 * width * height, offset=12)
    flow = payload.reshape(height, width, 2).astype(np.float64)
    valid = np.isfinite(flow[:, :, 0]) & np.isfinite(flow[:, :, 1])
    fu = np.where(valid, flow[:, :, 0], 0.0)
    fv = np.where(valid, flow[:, :, 1], 0.0)
    return FlowMap(fu, fv, valid, _read_sidecar_units(path))


def write_flo(f: FlowMap, path) -> None:
    """Write a Middlebury .flo file (plus units sidecar)."""
    flow = np.empty((f.height, f.width, 2), dtype="<f4")
    flow[:, :, 0] = f.fu
    flow[:, :, 1] = f.fv
    flow[~f.valid] = np.nan
    with open(path, "wb") as fh:
        fh.write(np.array([FLO_MAGIC], dtype="<f4").tobytes())
        fh.write(np.array([f.width, f.height], dtype="<i4").tobytes())
        fh.write(flow.tobytes())
    _write_sidecar(path, f.units)


def read_mask_png(path) -> np.ndarray:
    """Read an 8-bit mask PNG; any nonzero pixel is freespace."""
    img = _decode_png(Path(path).read_bytes())
    if img.dtype != np.uint8:
        raise WrongBitDepth(f"expected 8-bit samples, got {img.dtype}")
    if img.ndim != 2:
        raise WrongChannelCount(f"expected a single channel, got shape {img.shape}")
    return img != 0


def write_mask_png(mask: np.ndarray, path) -> None:
    """Write a boolean mask as an 8-bit single-channel PNG (255 = freespace)."""
    mask = np.asarray(mask, dtype=bool)
    ok, buf = cv2.imencode(".png", mask.astype(np.uint8) * 255)
    if not ok:
        raise OSError(f"PNG encoding failed for {path}")
    Path(path).write_bytes(buf.tobytes())


def read_flow(path) -> FlowMap:
    """Dispatch on extension: .flo or .png (KITTI convention)."""
    if flow_format_for(path) is FlowFileFormat.MIDDLEBURY_FLO:
        return read_flo(path)
    return read_kitti_png(path)


def write_flow(f: FlowMap, path) -> None:
    """Dispatch on extension: .flo or .png (KITTI convention)."""
    if flow_format_for(path) is FlowFileFormat.MIDDLEBURY_FLO:
        write_flo(f, path)
    else:
        write_kitti_png(f, path)


# ---------------------------------------------------------------------------
# Configuration schema
# ---------------------------------------------------------------------------


@dataclass
class PipelineConfig:
    """Parsed configuration file.

    Sections (all optional except ``camera`` and ``mount``):

        camera:  {fx, fy, u0, v0}
        mount:   {h, theta}
        motion:  {kind: "pose",     x_d, z_d, phi}
               | {kind: "velocity", v_r, delta_f, l, heading}
        scene:   {width, height, lateral_extent, longitudinal_extent,
                  sample_step}
        noise:   {sigma, seed}
        pso:     {x_d_bounds, z_d_bounds, phi_bounds, swarm_size,
                  max_iters, omega, c1, c2, tol, seed}
        fit:     {bin_w, min_row_support, tau, kind}
    """

    camera: CameraIntrinsics
    mount: MountConfig
    motion_kind: str | None = None
    pose: PoseDelta | None = None
    velocity: VelocityState | None = None
    scene: SceneSpec | None = None
    noise: NoiseSpec = NoiseSpec(sigma=0.0, seed=0)
    pso: PoseSearchConfig = PoseSearchConfig()
    fit: FitConfig = FitConfig()

    def require_pose(self) -> PoseDelta:
        if self.pose is None:
            raise ConfigError("config needs a motion section with kind 'pose'")
        return self.pose

    def require_velocity(self) -> VelocityState:
        if self.velocity is None:
            raise ConfigError("config needs a motion section with kind 'velocity'")
        return self.velocity

    def require_scene(self) -> SceneSpec:
        if self.scene is None:
            raise ConfigError("config needs a scene section")
        return self.scene


def _section(raw: dict, name: str, required: bool = False) -> dict | None:
    sec = raw.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"config is missing the required section {name!r}")
        return None
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return sec


def _build(cls, sec: dict, name: str, renames: dict | None = None):
    kwargs = dict(sec)
    for old, new in (renames or {}).items():
        if old in kwargs:
            kwargs[new] = kwargs.pop(old)
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"config section {name!r}: {e}") from None
    except ValueError as e:
        raise ConfigError(f"config section {name!r}: {e}") from None


def load_config(path) -> PipelineConfig:
    """Load and validate a JSON configuration file."""
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must hold a JSON object")

    camera = _build(CameraIntrinsics, _section(raw, "camera", required=True), "camera")
    mount = _build(MountConfig, _section(raw, "mount", required=True), "mount")

    cfg = PipelineConfig(camera=camera, mount=mount)

    motion = _section(raw, "motion")
    if motion is not None:
        kind = motion.get("kind")
        body = {k: v for k, v in motion.items() if k != "kind"}
        if kind == "pose":
            cfg.pose = _build(PoseDelta, body, "motion")
        elif kind == "velocity":
            cfg.velocity = _build(VelocityState, body, "motion")
        else:
            raise ConfigError(f"motion kind must be 'pose' or 'velocity', got {kind!r}")
        cfg.motion_kind = kind

    scene = _section(raw, "scene")
    if scene is not None:
        cfg.scene = _build(
            SceneSpec, {"intrinsics": camera, "mount": mount, **scene}, "scene"
        )

    noise = _section(raw, "noise")
    if noise is not None:
        cfg.noise = _build(NoiseSpec, noise, "noise")

    pso = _section(raw, "pso")
    if pso is not None:
        sec = dict(pso)
        for key in ("x_d_bounds", "z_d_bounds", "phi_bounds"):
            if key in sec:
                sec[key] = tuple(sec[key])
        cfg.pso = _build(PoseSearchConfig, sec, "pso")

    fit = _section(raw, "fit")
    if fit is not None:
        cfg.fit = _build(FitConfig, fit, "fit")

    return cfg
