"""Command-line front end: synthesize, optimize, evaluate.

Subcommands:
  synth       render a stereo sequence with ground truth to a directory
  optimize    recover depths and motion from a rendered directory
  eval-traj   segment-drift report plus a top-down SVG of both trajectories
  eval-depth  four-way depth error against a ground-truth directory

Exit codes: 0 success, 2 bad input or config, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .errors import (
    DegenerateConfiguration,
    DegenerateGeometry,
    DimensionMismatch,
    Divergence,
    EmptyMask,
    LengthMismatch,
    MalformedRotation,
    NonPositiveDepth,
    NonPositiveDisparity,
    ParseError,
    TooShort,
    UnsupportedFormat,
)
from .evaluation import Trajectory, align_sim3, depth_metrics, drift_metrics
from .geometry import Intrinsics, Pose6DoF, StereoRig, compose, invert, matrix_to_euler
from .io_formats import (
    format_config,
    read_config,
    read_depth,
    read_image,
    read_poses,
    write_depth,
    write_image,
    write_poses,
)
from .losses import LossWeights
from .optimizer import FrameObservation, HISTORY_FIELDS, Schedule, optimize_joint
from .synthworld import PLANE, SLANT, STAIRS, SceneSpec, TextureSpec, render_sequence

DEFAULTS = {
    "scene": "plane",
    "depths": (10.0,),
    "slant": (0.25, 0.0),
    "width": 64,
    "height": 32,
    "channels": 1,
    "seed": 7,
    "contrast": 0.42,
    "freq_scale": 1.0,
    "frames": 3,
    # lateral dolly: 0.2 m at 10 m depth is an exact 2 px shift at fx = 100
    "motion": (0.2, 0.0, 0.0, 0.0, 0.0, 0.0),
    "fx": 100.0,
    "fy": 100.0,
    "cx": 31.5,
    "cy": 15.5,
    "baseline": 0.5,
    "lambda_s": 0.85,
    "lambda_p": 1.0,
    "lambda_o": 1.0,
    "w_spatial_photo": 1.0,
    "w_disp": 1.0,
    "w_pose": 1.0,
    "w_temporal_photo": 1.0,
    "w_geo": 1.0,
    "lr": 1e-3,
    "iterations": 200,
    "rot_weight": 1.0,
    "init_depth": 10.0,
    "init": "flat",
}

SCENE_KINDS = {"plane": PLANE, "stairs": STAIRS, "slant": SLANT}


def resolve_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(read_config(args.config))
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    return cfg


def _scene_spec(cfg) -> SceneSpec:
    rig = StereoRig(
        intrinsics=Intrinsics(fx=cfg["fx"], fy=cfg["fy"], cx=cfg["cx"], cy=cfg["cy"]),
        baseline=cfg["baseline"],
    )
    texture = TextureSpec(
        seed=cfg["seed"], contrast=cfg["contrast"], freq_scale=cfg["freq_scale"]
    )
    return SceneSpec(
        kind=SCENE_KINDS[cfg["scene"]],
        depths=cfg["depths"],
        texture=texture,
        width=cfg["width"],
        height=cfg["height"],
        rig=rig,
        channels=cfg["channels"],
        slant=cfg["slant"],
    )


def _weights(cfg) -> LossWeights:
    return LossWeights(
        lambda_s=cfg["lambda_s"],
        lambda_p=cfg["lambda_p"],
        lambda_o=cfg["lambda_o"],
        w_spatial_photo=cfg["w_spatial_photo"],
        w_disp=cfg["w_disp"],
        w_pose=cfg["w_pose"],
        w_temporal_photo=cfg["w_temporal_photo"],
        w_geo=cfg["w_geo"],
    )


def write_manifest(out_dir, command, cfg, inputs, metrics, files) -> None:
    """Plain-text run record; deterministic so reruns are byte-identical."""
    lines = [f"command = {command}"]
    for key in sorted(inputs):
        lines.append(f"{key} = {inputs[key]}")
    lines.append("[config]")
    lines.extend(format_config(cfg).splitlines())
    lines.append("[metrics]")
    for key in sorted(metrics):
        v = metrics[key]
        lines.append(f"{key} = {v:.17g}" if isinstance(v, float) else f"{key} = {v}")
    lines.append("[files]")
    lines.extend(sorted(files))
    with open(os.path.join(out_dir, "manifest.txt"), "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")


def _image_name(prefix, index, channels):
    ext = "pgm" if channels == 1 else "ppm"
    return f"{prefix}_{index:03d}.{ext}"


def cmd_synth(args) -> int:
    cfg = resolve_config(args)
    spec = _scene_spec(cfg)
    motion = Pose6DoF.from_vector(np.array(cfg["motion"]))
    frames = render_sequence(spec, motion, n_frames=cfg["frames"])
    os.makedirs(args.out, exist_ok=True)
    files = []
    for i, fr in enumerate(frames):
        for prefix, img in (("left", fr.left), ("right", fr.right)):
            name = _image_name(prefix, i, cfg["channels"])
            write_image(img, os.path.join(args.out, name), maxval=65535)
            files.append(name)
        for prefix, dm in (
            ("depth_left", fr.gt_depth_left),
            ("depth_right", fr.gt_depth_right),
        ):
            name = f"{prefix}_{i:03d}.pfm"
            write_depth(dm, os.path.join(args.out, name))
            files.append(name)
    traj = Trajectory(poses=tuple(fr.camera_pose_world for fr in frames))
    write_poses(traj, os.path.join(args.out, "poses_gt.txt"))
    files.append("poses_gt.txt")
    write_manifest(
        args.out,
        "synth",
        cfg,
        {"out": args.out},
        {"frames": len(frames)},
        files,
    )
    return 0


def _load_frames(in_dir, channels):
    frames = []
    i = 0
    while True:
        left_path = os.path.join(in_dir, _image_name("left", i, channels))
        right_path = os.path.join(in_dir, _image_name("right", i, channels))
        if not os.path.exists(left_path):
            break
        frames.append(
            FrameObservation(left=read_image(left_path), right=read_image(right_path))
        )
        i += 1
    if not frames:
        raise ParseError(f"no left_*.{'pgm' if channels == 1 else 'ppm'} in {in_dir}")
    return frames


def cmd_optimize(args) -> int:
    cfg = resolve_config(args)
    rig = StereoRig(
        intrinsics=Intrinsics(fx=cfg["fx"], fy=cfg["fy"], cx=cfg["cx"], cy=cfg["cy"]),
        baseline=cfg["baseline"],
    )
    frames = _load_frames(args.in_dir, cfg["channels"])
    init_kwargs = {}
    if cfg["init"] == "ground_truth":
        gt_traj = read_poses(os.path.join(args.in_dir, "poses_gt.txt"))
        if len(gt_traj) != len(frames):
            raise LengthMismatch("pose file does not match frame count")
        motions = [
            matrix_to_euler(compose(invert(gt_traj.poses[k + 1]), gt_traj.poses[k]))
            for k in range(len(frames) - 1)
        ]
        init_kwargs["init_poses"] = motions
        init_kwargs["init_depths_left"] = [
            read_depth(os.path.join(args.in_dir, f"depth_left_{k:03d}.pfm"))
            for k in range(len(frames))
        ]
        init_kwargs["init_depths_right"] = [
            read_depth(os.path.join(args.in_dir, f"depth_right_{k:03d}.pfm"))
            for k in range(len(frames))
        ]
    result = optimize_joint(
        frames,
        rig,
        _weights(cfg),
        Schedule(lr=cfg["lr"], iterations=cfg["iterations"]),
        init_depth=cfg["init_depth"],
        rot_weight=cfg["rot_weight"],
        **init_kwargs,
    )
    os.makedirs(args.out, exist_ok=True)
    files = []
    for k in range(len(frames)):
        for prefix, dm in (
            ("depth_left", result.depths_left[k]),
            ("depth_right", result.depths_right[k]),
        ):
            name = f"{prefix}_{k:03d}.pfm"
            write_depth(dm, os.path.join(args.out, name))
            files.append(name)
    write_poses(result.trajectory, os.path.join(args.out, "poses_est.txt"))
    files.append("poses_est.txt")
    with open(os.path.join(args.out, "loss_history.csv"), "w", encoding="ascii") as f:
        f.write(",".join(HISTORY_FIELDS) + "\n")
        for row in result.history:
            f.write(
                ",".join(
                    str(row[k]) if k == "iteration" else f"{row[k]:.17g}"
                    for k in HISTORY_FIELDS
                )
                + "\n"
            )
    files.append("loss_history.csv")
    metrics = {
        "final_loss": result.final_loss,
        "iterations_run": len(result.history),
        "max_pose_gap_m": max((c[0] for c in result.consistency), default=0.0),
        "max_pose_gap_rad": max((c[1] for c in result.consistency), default=0.0),
    }
    write_manifest(
        args.out, "optimize", cfg, {"in": args.in_dir, "out": args.out}, metrics, files
    )
    return 0


# ---------------------------------------------------------------------------
# trajectory plotting


def _nice_length(span: float) -> float:
    """A 1/2/5-series length roughly a fifth of the span."""
    if span <= 0:
        return 1.0
    raw = span / 5.0
    mag = 10.0 ** np.floor(np.log10(raw))
    for mult in (1.0, 2.0, 5.0):
        if raw <= mult * mag:
            return mult * mag
    return 10.0 * mag


def trajectory_svg(estimate, reference, width=640, height=480) -> str:
    """Top-down (x-z) overlay of the two trajectories with a scale bar."""
    pts = np.vstack([reference.positions(), estimate.positions()])
    x, z = pts[:, 0], pts[:, 2]
    span_x = max(float(x.max() - x.min()), 1e-9)
    span_z = max(float(z.max() - z.min()), 1e-9)
    margin = 40.0
    scale = min((width - 2 * margin) / span_x, (height - 2 * margin) / span_z)

    def to_svg(p):
        sx = margin + (p[0] - x.min()) * scale
        sy = height - margin - (p[2] - z.min()) * scale
        return f"{sx:.2f},{sy:.2f}"

    ref_pts = " ".join(to_svg(p) for p in reference.positions())
    est_pts = " ".join(to_svg(p) for p in estimate.positions())
    bar_m = _nice_length(max(span_x, span_z))
    bar_px = bar_m * scale
    bar_y = height - margin / 2
    label = f"{bar_m:g} m"
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<polyline fill="none" stroke="#444444" stroke-width="1.5" points="{ref_pts}"/>',
        f'<polyline fill="none" stroke="#c0392b" stroke-width="1.5" points="{est_pts}"/>',
        f'<line class="scalebar" x1="{margin:.2f}" y1="{bar_y:.2f}" '
        f'x2="{margin + bar_px:.2f}" y2="{bar_y:.2f}" stroke="black" stroke-width="2"/>',
        f'<text x="{margin:.2f}" y="{bar_y - 6:.2f}" font-size="12">{label}</text>',
        f'<text x="{width - margin - 100:.2f}" y="{margin:.2f}" font-size="12" '
        f'fill="#444444">reference</text>',
        f'<text x="{width - margin - 100:.2f}" y="{margin + 16:.2f}" font-size="12" '
        f'fill="#c0392b">estimate</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


def cmd_eval_traj(args) -> int:
    est = read_poses(args.est)
    ref = read_poses(args.ref)
    if args.align == "6dof":
        est, _, _, _ = align_sim3(est, ref, with_scale=False)
    elif args.align == "7dof":
        est, _, _, _ = align_sim3(est, ref, with_scale=True)
    report = drift_metrics(est, ref)
    sys.stdout.write(report.to_text())
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "drift.csv"), "w", encoding="ascii") as f:
        f.write(report.to_csv())
    with open(os.path.join(args.out, "trajectory.svg"), "w", encoding="ascii") as f:
        f.write(trajectory_svg(est, ref))
    write_manifest(
        args.out,
        "eval-traj",
        {},
        {"est": args.est, "ref": args.ref, "align": args.align, "out": args.out},
        {"t_rel_percent": report.t_rel, "r_rel_deg_per_100m": report.r_rel},
        ["drift.csv", "trajectory.svg"],
    )
    return 0


def cmd_eval_depth(args) -> int:
    names = sorted(
        set(n for n in os.listdir(args.pred_dir) if n.endswith(".pfm"))
        & set(n for n in os.listdir(args.gt_dir) if n.endswith(".pfm"))
    )
    if not names:
        raise ParseError("no matching .pfm files between the two directories")
    rows = []
    for name in names:
        pred = read_depth(os.path.join(args.pred_dir, name))
        gt = read_depth(os.path.join(args.gt_dir, name))
        try:
            rows.append(
                (name, depth_metrics(pred, gt, cap=args.cap, median_scale=args.median_scale))
            )
        except EmptyMask as e:
            print(f"warning: {name} skipped: {e}", file=sys.stderr)
    if not rows:
        raise EmptyMask("every frame was skipped")
    lines = ["frame,abs_rel,sq_rel,rmse,rmse_log"]
    for name, r in rows:
        lines.append(
            f"{name},{r.abs_rel:.17g},{r.sq_rel:.17g},{r.rmse:.17g},{r.rmse_log:.17g}"
        )
    agg = [
        float(np.mean([getattr(r, k) for _, r in rows]))
        for k in ("abs_rel", "sq_rel", "rmse", "rmse_log")
    ]
    lines.append("aggregate," + ",".join(f"{v:.17g}" for v in agg))
    csv_text = "\n".join(lines) + "\n"
    sys.stdout.write(csv_text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "depth_eval.csv"), "w", encoding="ascii") as f:
            f.write(csv_text)
        write_manifest(
            args.out,
            "eval-depth",
            {},
            {
                "pred": args.pred_dir,
                "gt": args.gt_dir,
                "cap": f"{args.cap:g}",
                "median_scale": str(args.median_scale).lower(),
                "out": args.out,
            },
            {
                "abs_rel": agg[0],
                "sq_rel": agg[1],
                "rmse": agg[2],
                "rmse_log": agg[3],
                "frames": len(rows),
            },
            ["depth_eval.csv"],
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stereovo",
        description="Direct stereo visual odometry on synthetic scenes.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("synth", help="render a stereo sequence with ground truth")
    ps.add_argument("--config", help="config file (key = value lines)")
    ps.add_argument("--seed", type=int, help="texture seed, overrides config")
    ps.add_argument("--out", required=True, help="output directory")
    ps.set_defaults(func=cmd_synth)

    po = sub.add_parser("optimize", help="recover depth and motion from a sequence")
    po.add_argument("in_dir", help="directory produced by synth")
    po.add_argument("--config", help="config file")
    po.add_argument("--seed", type=int, help="overrides config seed")
    po.add_argument("--out", required=True, help="output directory")
    po.set_defaults(func=cmd_optimize)

    pt = sub.add_parser("eval-traj", help="segment drift between two pose files")
    pt.add_argument("est", help="estimated pose file")
    pt.add_argument("ref", help="reference pose file")
    pt.add_argument(
        "--align",
        choices=("none", "6dof", "7dof"),
        default="none",
        help="pre-align the estimate to the reference",
    )
    pt.add_argument("--out", required=True, help="output directory")
    pt.set_defaults(func=cmd_eval_traj)

    pd = sub.add_parser("eval-depth", help="depth error between two directories")
    pd.add_argument("pred_dir", help="predicted depth maps (.pfm)")
    pd.add_argument("gt_dir", help="ground-truth depth maps (.pfm)")
    pd.add_argument("--cap", type=float, default=80.0, help="max evaluated depth (m)")
    pd.add_argument(
        "--median-scale",
        action="store_true",
        help="rescale prediction by median(gt)/median(pred)",
    )
    pd.add_argument("--out", help="optional output directory")
    pd.set_defaults(func=cmd_eval_depth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TooShort as e:
        print(f"error: trajectory too short: {e}", file=sys.stderr)
        return 2
    except (
        ParseError,
        UnsupportedFormat,
        MalformedRotation,
        LengthMismatch,
        DimensionMismatch,
        OSError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (
        Divergence,
        EmptyMask,
        DegenerateGeometry,
        DegenerateConfiguration,
        NonPositiveDepth,
        NonPositiveDisparity,
    ) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
