"""Command-line pipeline: render, synthesize, fit, segment, localize, evaluate.

Every subcommand reads a JSON config (see flow_io.PipelineConfig) where
it needs camera or algorithm parameters, writes deterministic artifacts
given config + seed, and exits 0 on success.  On failure a machine-
readable JSON error object goes to stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .errors import ConfigError, FsflowError
from .fitting import fit_fv_curve, render_fitted_fv, row_projection, segment_freespace
from .flow_io import (
    load_config,
    read_flow,
    read_mask_png,
    write_flow,
    write_mask_png,
)
from .flow_models import MODEL_NAMES, PoseDelta, VelocityState, render_flow_map
from .metrics import evaluate
from .pose_estimation import estimate_pose
from .scene_synth import RNG_ALGORITHM, NoiseSpec, add_noise, insert_obstacle, synth_ground_truth
from .viz import save_flow_viz


def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        return max(1, args.threads)
    env = os.environ.get("FSOF_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"FSOF_THREADS must be an integer, got {env!r}") from None
    return 1


def _motion_for_model(cfg, model: str):
    if model in ("full-disp", "simple-disp"):
        return cfg.require_pose()
    if model in ("full-vel", "simple-vel"):
        return cfg.require_velocity()
    # simplest: variant follows whichever motion the config carries
    if cfg.pose is not None:
        return cfg.pose
    if cfg.velocity is not None:
        return cfg.velocity
    raise ConfigError("config needs a motion section")


def cmd_model(args) -> int:
    cfg = load_config(args.config)
    scene = cfg.require_scene()
    flow = render_flow_map(
        cfg.camera,
        cfg.mount,
        _motion_for_model(cfg, args.model),
        width=scene.width,
        height=scene.height,
        model=args.model,
    )
    write_flow(flow, args.out)
    viz_path = args.viz or str(args.out) + ".viz.png"
    save_flow_viz(flow, viz_path)
    print(json.dumps({"out": str(args.out), "viz": viz_path,
                      "valid_pixels": int(flow.valid.sum())}))
    return 0


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    scene = cfg.require_scene()
    flow = synth_ground_truth(scene, cfg.require_pose())
    mask = flow.valid.copy()
    if args.obstacle:
        parts = [float(x) for x in args.obstacle.split(",")]
        if len(parts) != 6:
            raise ConfigError("--obstacle wants 'x,y,w,h,du,dv'")
        rect = tuple(int(p) for p in parts[:4])
        flow, mask = insert_obstacle(flow, rect, (parts[4], parts[5]))
    sigma = cfg.noise.sigma if args.noise_sigma is None else args.noise_sigma
    if sigma > 0:
        flow = add_noise(flow, NoiseSpec(sigma=sigma, seed=cfg.noise.seed))
    write_flow(flow, args.out_flow)
    if args.out_mask:
        write_mask_png(mask, args.out_mask)
    print(json.dumps({
        "out_flow": str(args.out_flow),
        "out_mask": str(args.out_mask) if args.out_mask else None,
        "valid_pixels": int(flow.valid.sum()),
        "noise_sigma": sigma,
        "rng": RNG_ALGORITHM,
    }))
    return 0


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    flow = read_flow(args.flow)
    mask = read_mask_png(args.mask) if args.mask else None
    rp = row_projection(flow, mask, bin_w=cfg.fit.bin_w,
                        min_row_support=cfg.fit.min_row_support)
    fit = fit_fv_curve(rp, cfg.camera, kind=cfg.fit.kind)
    result = fit.to_json()
    result["rows_used"] = int(rp.rows.size)
    if args.out_fit_json:
        with open(args.out_fit_json, "w") as fh:
            json.dump(result, fh, indent=2)
    if args.out_fitted_flow:
        fitted = render_fitted_fv(fit, flow.width, flow.height)
        write_flow(fitted, args.out_fitted_flow)
    print(json.dumps(result))
    return 0


def cmd_segment(args) -> int:
    observed = read_flow(args.flow)
    fitted = read_flow(args.fitted)
    mask = segment_freespace(observed, fitted, tau=args.tau)
    write_mask_png(mask, args.out_mask)
    print(json.dumps({"out_mask": str(args.out_mask),
                      "freespace_pixels": int(mask.sum())}))
    return 0


def cmd_estimate_pose(args) -> int:
    cfg = load_config(args.config)
    flow = read_flow(args.flow)
    mask = read_mask_png(args.mask) if args.mask else flow.valid
    estimate = estimate_pose(flow, mask, cfg.camera, cfg.mount, cfg.pso)
    result = estimate.to_json()
    if args.out_json:
        with open(args.out_json, "w") as fh:
            json.dump(result, fh, indent=2)
    print(json.dumps(result))
    return 0


def cmd_eval(args) -> int:
    gt = read_flow(args.gt)
    est = read_flow(args.est)
    mask = read_mask_png(args.mask) if args.mask else None
    report = evaluate(gt, est, mask).to_json()
    if args.out_json:
        with open(args.out_json, "w") as fh:
            json.dump(report, fh, indent=2)
    if args.out_viz:
        from .viz import save_error_viz

        save_error_viz(gt, est, args.out_viz, mask)
    print(json.dumps(report))
    return 0


def cmd_bench(args) -> int:
    from .geometry import CameraIntrinsics, MountConfig

    threads = _threads(args)
    k = CameraIntrinsics(fx=700.0, fy=700.0, u0=args.width / 2, v0=args.height / 3)
    m = MountConfig(h=1.5, theta=0.02)
    if args.model in ("full-vel", "simple-vel"):
        motion = VelocityState(v_r=10.0, delta_f=0.05, l=2.7)
    else:
        motion = PoseDelta(x_d=0.05, z_d=1.0, phi=0.01)

    def render():
        return render_flow_map(k, m, motion, width=args.width, height=args.height,
                               model=args.model)

    render()  # warm up
    times = []
    for _ in range(args.frames):
        t0 = time.perf_counter()
        render()
        times.append(time.perf_counter() - t0)
    best = min(times)
    mean = sum(times) / len(times)
    report = {
        "width": args.width,
        "height": args.height,
        "model": args.model,
        "frames": args.frames,
        "threads": threads,
        "fps_best": 1.0 / best,
        "fps_mean": 1.0 / mean,
        "ms_per_frame_mean": mean * 1e3,
        "environment": {
            "platform": platform.platform(),
            "processor": platform.processor() or platform.machine(),
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    }
    print(json.dumps(report, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsflow",
        description="Closed-form road-plane optical flow: modeling, synthesis, "
                    "curve fitting, freespace segmentation, and pose estimation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", help="render a closed-form flow map")
    p.add_argument("--config", required=True)
    p.add_argument("--model", choices=MODEL_NAMES, default="full-disp")
    p.add_argument("--out", required=True, help="output flow file (.flo or .png)")
    p.add_argument("--viz", help="color-wheel PNG path (default: <out>.viz.png)")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("synth", help="synthesize ground-truth flow over a virtual road plane")
    p.add_argument("--config", required=True)
    p.add_argument("--out-flow", required=True)
    p.add_argument("--out-mask")
    p.add_argument("--noise-sigma", type=float, help="override the config noise std (px)")
    p.add_argument("--obstacle", help="insert an obstacle: 'x,y,w,h,du,dv'")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit the per-row vertical-flow profile")
    p.add_argument("--flow", required=True)
    p.add_argument("--mask")
    p.add_argument("--config", required=True)
    p.add_argument("--out-fit-json")
    p.add_argument("--out-fitted-flow")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("segment", help="segment freespace by residual thresholding")
    p.add_argument("--flow", required=True)
    p.add_argument("--fitted", required=True)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--out-mask", required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("estimate-pose", help="recover (x_d, z_d, phi) from observed flow")
    p.add_argument("--flow", required=True)
    p.add_argument("--mask")
    p.add_argument("--config", required=True)
    p.add_argument("--out-json")
    p.set_defaults(func=cmd_estimate_pose)

    p = sub.add_parser("eval", help="evaluate an estimated flow map against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--est", required=True)
    p.add_argument("--mask")
    p.add_argument("--out-json")
    p.add_argument("--out-viz", help="grayscale endpoint-error PNG")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="measure dense rendering throughput")
    p.add_argument("--width", type=int, default=1242)
    p.add_argument("--height", type=int, default=375)
    p.add_argument("--threads", type=int)
    p.add_argument("--model", choices=MODEL_NAMES, default="full-disp")
    p.add_argument("--frames", type=int, default=20)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FsflowError as e:
        print(json.dumps({"error": {"type": type(e).__name__, "message": str(e)}}),
              file=sys.stderr)
        return 1
    except OSError as e:
        print(json.dumps({"error": {"type": "OSError", "message": str(e)}}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
