"""Side-by-side timing of the numpy and numba kernel backends.

    python3 benchmarks/bench_kernels.py --size 256x128 --reps 30

Both implementation modules are imported directly, so one run compares them
on identical inputs no matter which backend the package-level dispatch
selected. The last row times a full two-frame objective evaluation under
the active dispatch; rerun with STEREOVO_NUMBA=0 to see it on pure numpy.
"""

import argparse
import time

import numpy as np

from stereovo import (
    FrameObservation,
    Intrinsics,
    LossWeights,
    Pose6DoF,
    SceneSpec,
    StereoRig,
    TextureSpec,
    render_sequence,
)
from stereovo.geometry import pose_chain_forward
from stereovo.kernels import BACKEND, numpy_ops
from stereovo.optimizer import OptimizationProblem

try:
    from stereovo.kernels import numba_ops
except ImportError:
    numba_ops = None


def best_of(fun, reps):
    fun()  # warm-up; first call of a jitted kernel compiles it
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fun()
        best = min(best, time.perf_counter() - t0)
    return best


def build_inputs(width, height):
    fx = 100.0 * width / 64.0
    rig = StereoRig(
        Intrinsics(fx, fx, (width - 1) / 2.0, (height - 1) / 2.0), 0.5
    )
    spec = SceneSpec(
        kind="plane",
        depths=(10.0,),
        texture=TextureSpec(seed=7),
        width=width,
        height=height,
        rig=rig,
    )
    motion = Pose6DoF(np.array([0.1, 0.0, -0.05]), np.array([0.01, 0.02, 0.003]))
    frames = render_sequence(spec, motion, n_frames=2)
    rng = np.random.default_rng(1)
    u = rng.uniform(0.0, width - 1.0, (height, width))
    v = rng.uniform(0.0, height - 1.0, (height, width))
    g = rng.uniform(-1.0, 1.0, (height, width))
    chain = pose_chain_forward(motion)
    return rig, frames, u, v, g, chain


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", default="256x128", help="image size as WIDTHxHEIGHT")
    ap.add_argument("--reps", type=int, default=30, help="timed repetitions per kernel")
    args = ap.parse_args()
    width, height = (int(s) for s in args.size.lower().split("x"))

    rig, frames, u, v, g, chain = build_inputs(width, height)
    img2d = frames[0].left.data[:, :, 0]
    img3d = frames[0].left.data
    depth_a = frames[0].gt_depth_left.data
    depth_b = frames[1].gt_depth_left.data
    intr = rig.intrinsics
    R, t, dR, dt = chain
    cam = (intr.fx, intr.fy, intr.cx, intr.cy)

    cases = [
        ("box_sum3", lambda ops: ops.box_sum3(img2d)),
        ("bilinear_forward", lambda ops: ops.bilinear_forward(img3d, u, v)),
        ("bilinear_scatter", lambda ops: ops.bilinear_scatter(u, v, g, height, width)),
        ("temporal_map_grad", lambda ops: ops.temporal_map_grad(depth_a, *cam, R, t, dR, dt, 1e-6)),
        ("geo_direction", lambda ops: ops.geo_direction(depth_a, depth_b, *cam, R, t, dR, dt, 1e-6)),
    ]

    print(f"image {width}x{height}, best of {args.reps} runs, times in ms")
    print(f"{'kernel':20s} {'numpy':>10s} {'numba':>10s} {'speedup':>9s}")
    for name, call in cases:
        t_np = 1e3 * best_of(lambda: call(numpy_ops), args.reps)
        if numba_ops is not None:
            t_nb = 1e3 * best_of(lambda: call(numba_ops), args.reps)
            print(f"{name:20s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:8.1f}x")
        else:
            print(f"{name:20s} {t_np:10.3f} {'n/a':>10s} {'n/a':>9s}")

    problem = OptimizationProblem(
        frames=[FrameObservation(f.left, f.right) for f in frames],
        rig=rig,
        weights=LossWeights(),
    )
    x0 = problem.pack(
        [f.gt_depth_left for f in frames],
        [f.gt_depth_right for f in frames],
        [Pose6DoF.identity()],
        [Pose6DoF.identity()],
    )
    t_full = 1e3 * best_of(lambda: problem.loss_and_grad(x0), max(3, args.reps // 3))
    print(f"{'full objective':20s} {t_full:10.3f}  (active backend: {BACKEND})")


if __name__ == "__main__":
    main()
