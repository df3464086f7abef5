"""Direct minimization of the loss families with a from-scratch Adam.

Depth maps are optimized in log space (positivity for free), poses as plain
6-vectors. Every run keeps the best-so-far parameters, records a per-family
loss history and stops early once the best loss stops improving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import Divergence, LengthMismatch
from .evaluation import Trajectory
from .geometry import (
    Pose6DoF,
    RigidTransform,
    StereoRig,
    compose,
    euler_to_matrix,
    invert,
)
from .imagegrid import DepthMap, ImageBuffer
from .losses import (
    LossWeights,
    StereoPairObservation,
    frame_spatial_terms,
    geometric_registration_loss,
    pair_temporal_terms,
    _temporal_photometric_term,
)
from .geometry import Intrinsics, chain_invert, pose_chain_forward

HISTORY_FIELDS = (
    "iteration",
    "spatial_photo",
    "disparity",
    "pose_consistency",
    "temporal_photo",
    "geometric",
    "total",
)

# early stop: relative best-loss improvement below this across the window
CONVERGENCE_RTOL = 1e-8
CONVERGENCE_WINDOW = 50


@dataclass
class AdamState:
    """First/second moment accumulators for one parameter vector."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, beta1: float = 0.9, beta2: float = 0.99, eps: float = 1e-8):
        return cls(m=np.zeros(n), v=np.zeros(n), beta1=beta1, beta2=beta2, eps=eps)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, lr: float):
    """One bias-corrected Adam update; returns (new params, state)."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise LengthMismatch("params, grads and state must have equal sizes")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * (grads * grads)
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.eps), state


@dataclass(frozen=True)
class Schedule:
    """Step-decay learning rate: halved after every fifth of the budget."""

    lr: float = 1e-3
    iterations: int = 1000

    def __post_init__(self):
        if self.lr <= 0 or self.iterations < 1:
            raise ValueError("schedule needs lr > 0 and iterations >= 1")

    def lr_at(self, iteration: int) -> float:
        if not 0 <= iteration < self.iterations:
            raise ValueError("iteration outside the schedule")
        fifth = math.ceil(self.iterations / 5)
        return self.lr * 0.5 ** (iteration // fifth)


def _adam_minimize(fun, x0: np.ndarray, schedule: Schedule):
    """Minimize fun(x) -> (loss, grad, components); returns best x and history."""
    x = np.array(x0, dtype=float)
    state = AdamState.zeros(x.size)
    best_x = x.copy()
    best_loss = math.inf
    best_track = []
    history = []
    for it in range(schedule.iterations):
        loss, grad, comps = fun(x)
        if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise Divergence(f"non-finite loss or gradient at iteration {it}")
        if loss < best_loss:
            best_loss = loss
            best_x = x.copy()
        best_track.append(best_loss)
        row = {k: 0.0 for k in HISTORY_FIELDS}
        row.update(comps)
        row["iteration"] = it
        row["total"] = loss
        history.append(row)
        if it >= CONVERGENCE_WINDOW:
            before = best_track[it - CONVERGENCE_WINDOW]
            tol = CONVERGENCE_RTOL * max(before, 1e-300)
            # flat only if the current loss sits at the best level too,
            # otherwise Adam may still be oscillating above a stale best
            if before - best_loss < tol and loss - best_loss < tol:
                break
        x, state = adam_step(state, x, grad, schedule.lr_at(it))
    return best_x, best_loss, history


# ---------------------------------------------------------------------------
# problem assembly


@dataclass(frozen=True)
class FrameObservation:
    """One observed stereo frame (images only)."""

    left: ImageBuffer
    right: ImageBuffer


@dataclass
class OptimizationProblem:
    """Joint depth + motion estimation over an observed stereo sequence.

    Parameter vector layout: per-frame left log-depth maps, per-frame right
    log-depth maps, then per-step left and right pose 6-vectors. Rotation
    entries are stored divided by rot_weight so that one knob rebalances
    rotational against translational step sizes.
    """

    frames: list
    rig: StereoRig
    weights: LossWeights = field(default_factory=LossWeights)
    rot_weight: float = 1.0

    def __post_init__(self):
        if len(self.frames) < 1:
            raise LengthMismatch("need at least one frame")
        shape = self.frames[0].left.data.shape
        for f in self.frames:
            if f.left.data.shape != shape or f.right.data.shape != shape:
                raise LengthMismatch("all frames must share one image shape")
        if self.rot_weight <= 0:
            raise ValueError("rot_weight must be positive")
        h, w, _ = shape
        self._h, self._w = h, w
        self._n = len(self.frames)

    @property
    def n_params(self) -> int:
        return 2 * self._n * self._h * self._w + 12 * (self._n - 1)

    def pack(self, depths_left, depths_right, poses_left, poses_right) -> np.ndarray:
        n, npx = self._n, self._h * self._w
        if (
            len(depths_left) != n
            or len(depths_right) != n
            or len(poses_left) != n - 1
            or len(poses_right) != n - 1
        ):
            raise LengthMismatch("wrong number of depths or poses")
        parts = [np.log(d.data).ravel() for d in depths_left]
        parts += [np.log(d.data).ravel() for d in depths_right]
        for pose in list(poses_left) + list(poses_right):
            vec = pose.as_vector().copy()
            vec[3:] /= self.rot_weight
            parts.append(vec)
        x = np.concatenate(parts) if parts else np.zeros(0)
        assert x.size == self.n_params
        return x

    def unpack(self, x: np.ndarray):
        n, npx = self._n, self._h * self._w
        shape = (self._h, self._w)
        depths_left = [
            DepthMap(np.exp(x[i * npx : (i + 1) * npx]).reshape(shape)) for i in range(n)
        ]
        off = n * npx
        depths_right = [
            DepthMap(np.exp(x[off + i * npx : off + (i + 1) * npx]).reshape(shape))
            for i in range(n)
        ]
        off = 2 * n * npx
        poses_left = []
        poses_right = []
        for i in range(n - 1):
            vec = x[off + 6 * i : off + 6 * (i + 1)].copy()
            vec[3:] *= self.rot_weight
            poses_left.append(Pose6DoF.from_vector(vec))
        off += 6 * (n - 1)
        for i in range(n - 1):
            vec = x[off + 6 * i : off + 6 * (i + 1)].copy()
            vec[3:] *= self.rot_weight
            poses_right.append(Pose6DoF.from_vector(vec))
        return depths_left, depths_right, poses_left, poses_right

    def loss_and_grad(self, x: np.ndarray):
        """Total loss over the sequence, gradient in packed layout, components."""
        n, npx = self._n, self._h * self._w
        depths_left, depths_right, poses_left, poses_right = self.unpack(x)
        grad = np.zeros_like(x)
        comps = {
            "spatial_photo": 0.0,
            "disparity": 0.0,
            "pose_consistency": 0.0,
            "temporal_photo": 0.0,
            "geometric": 0.0,
        }
        w = self.weights

        def add_depth_grad(index, side, g):
            # chain through depth = exp(log_depth)
            base = index * npx if side == "l" else (n + index) * npx
            d = depths_left[index].data if side == "l" else depths_right[index].data
            grad[base : base + npx] += (g * d).ravel()

        def add_pose_grad(index, side, g):
            off = 2 * n * npx + (0 if side == "l" else 6 * (n - 1)) + 6 * index
            gv = g.copy()
            gv[3:] *= self.rot_weight
            grad[off : off + 6] += gv

        for i, f in enumerate(self.frames):
            photo, disp, g_dl, g_dr = frame_spatial_terms(
                f.left, f.right, depths_left[i], depths_right[i], self.rig, w
            )
            comps["spatial_photo"] += photo
            comps["disparity"] += disp
            add_depth_grad(i, "l", g_dl)
            add_depth_grad(i, "r", g_dr)

        for i in range(n - 1):
            obs = StereoPairObservation(
                left_k=self.frames[i].left,
                right_k=self.frames[i].right,
                left_k1=self.frames[i + 1].left,
                right_k1=self.frames[i + 1].right,
                rig=self.rig,
            )
            pose_raw, temporal_raw, geo_raw, grads = pair_temporal_terms(
                obs,
                depths_left[i],
                depths_right[i],
                depths_left[i + 1],
                depths_right[i + 1],
                poses_left[i],
                poses_right[i],
                w,
            )
            comps["pose_consistency"] += pose_raw
            comps["temporal_photo"] += temporal_raw
            comps["geometric"] += geo_raw
            add_depth_grad(i, "l", grads["depth_l_k"])
            add_depth_grad(i, "r", grads["depth_r_k"])
            add_depth_grad(i + 1, "l", grads["depth_l_k1"])
            add_depth_grad(i + 1, "r", grads["depth_r_k1"])
            add_pose_grad(i, "l", grads["pose_left"])
            add_pose_grad(i, "r", grads["pose_right"])

        total = (
            w.w_spatial_photo * comps["spatial_photo"]
            + w.w_disp * comps["disparity"]
            + w.w_pose * comps["pose_consistency"]
            + w.w_temporal_photo * comps["temporal_photo"]
            + w.w_geo * comps["geometric"]
        )
        return total, grad, comps


# ---------------------------------------------------------------------------
# drivers


def _optimize_frame_depths(left, right, rig, init_l, init_r, weights, schedule):
    """Minimize the spatial families over both log-depth maps of one frame."""
    h, w = init_l.data.shape

    def fun(x):
        d_l = DepthMap(np.exp(x[: h * w]).reshape(h, w))
        d_r = DepthMap(np.exp(x[h * w :]).reshape(h, w))
        photo, disp, g_dl, g_dr = frame_spatial_terms(left, right, d_l, d_r, rig, weights)
        loss = weights.w_spatial_photo * photo + weights.w_disp * disp
        grad = np.concatenate(
            [(g_dl * d_l.data).ravel(), (g_dr * d_r.data).ravel()]
        )
        return loss, grad, {"spatial_photo": photo, "disparity": disp}

    x0 = np.concatenate([np.log(init_l.data).ravel(), np.log(init_r.data).ravel()])
    best_x, _, history = _adam_minimize(fun, x0, schedule)
    return (
        DepthMap(np.exp(best_x[: h * w]).reshape(h, w)),
        DepthMap(np.exp(best_x[h * w :]).reshape(h, w)),
        history,
    )


def optimize_depth_stereo(
    left: ImageBuffer,
    right: ImageBuffer,
    rig: StereoRig,
    init: DepthMap,
    weights: LossWeights,
    schedule: Schedule,
):
    """Recover a metric left depth map from one rectified stereo pair.

    Minimizes the stereo photometric and disparity-consistency families over
    the log-depth maps of both views (initialized from `init`); the right
    map is an auxiliary. Returns (left DepthMap, history).
    """
    d_l, _, history = _optimize_frame_depths(left, right, rig, init, init, weights, schedule)
    return d_l, history


def optimize_pose_temporal(
    img_k: ImageBuffer,
    img_k1: ImageBuffer,
    depth_k: DepthMap,
    intr: Intrinsics,
    init: Pose6DoF,
    weights: LossWeights,
    schedule: Schedule,
    depth_k1: DepthMap = None,
    rot_weight: float = 1.0,
):
    """Recover the 6-DoF motion between two frames with known depth.

    Always scores resynthesizing frame k from frame k+1; when the second
    frame's depth is also given, the mirrored photometric term and the
    symmetric 3D registration term join the objective. Returns
    (Pose6DoF, history).
    """

    def fun(x):
        vec = x.copy()
        vec[3:] *= rot_weight
        pose = Pose6DoF.from_vector(vec)
        chain = pose_chain_forward(pose)
        temporal, g_d, g_pose = _temporal_photometric_term(
            img_k, img_k1, depth_k, intr, chain, weights.lambda_s
        )
        g = weights.w_temporal_photo * g_pose
        geo = 0.0
        if depth_k1 is not None:
            s_bwd, _, g_bwd = _temporal_photometric_term(
                img_k1, img_k, depth_k1, intr, chain_invert(*chain), weights.lambda_s
            )
            temporal += s_bwd
            g += weights.w_temporal_photo * g_bwd
            geo_lv = geometric_registration_loss(depth_k, depth_k1, intr, pose)
            geo = geo_lv.scalar
            g += weights.w_geo * geo_lv.gradients["pose"]
        loss = weights.w_temporal_photo * temporal + weights.w_geo * geo
        g[3:] *= rot_weight
        return loss, g, {"temporal_photo": temporal, "geometric": geo}

    x0 = init.as_vector().copy()
    x0[3:] /= rot_weight
    best_x, _, history = _adam_minimize(fun, x0, schedule)
    vec = best_x.copy()
    vec[3:] *= rot_weight
    return Pose6DoF.from_vector(vec), history


@dataclass
class JointResult:
    depths_left: list
    depths_right: list
    poses_left: list
    poses_right: list
    trajectory: Trajectory
    consistency: list
    history: list
    final_loss: float


def trajectory_from_motions(poses) -> Trajectory:
    """Integrate per-step motions (frame k to k+1) into world poses."""
    world = [RigidTransform.identity()]
    for p in poses:
        world.append(compose(world[-1], invert(euler_to_matrix(p))))
    return Trajectory(poses=tuple(world))


# Warm-start schedules. Per-pixel depth under the full objective is badly
# conditioned (the L1 spatial terms punish the jitter Adam needs to explore),
# so the spatial and temporal subproblems run first at their natural rates
# and the caller's schedule only governs the final joint polish.
WARM_DEPTH_SCHEDULE = Schedule(lr=3e-2, iterations=2000)
WARM_POSE_SCHEDULE = Schedule(lr=3e-3, iterations=400)


def _median3(depth: DepthMap) -> DepthMap:
    """3x3 median filter with edge replication.

    Kills the isolated runaway depths the stereo stage leaves in occluded or
    low-contrast spots; those outliers otherwise bias the temporal stages.
    """
    a = depth.data
    h, w = a.shape
    p = np.pad(a, 1, mode="edge")
    stack = np.stack([p[dy : dy + h, dx : dx + w] for dy in range(3) for dx in range(3)])
    return DepthMap(np.median(stack, axis=0))


def _fill_unsupported(depth: DepthMap, rig: StereoRig, side: str) -> DepthMap:
    """Replace depths the stereo pair cannot constrain with row-wise neighbors.

    A left-map pixel whose match u - disparity falls outside the partner
    image (u + disparity for the right map) receives no spatial gradient and
    would sit at its init value forever, which then poisons the temporal
    terms. Those pixels take the nearest supported value in their row.
    """
    d = depth.data
    h, w = d.shape
    u = np.arange(w, dtype=float)
    disp = rig.baseline * rig.intrinsics.fx / d
    match = u[None, :] - disp if side == "left" else u[None, :] + disp
    valid = (match >= 0.0) & (match <= w - 1.0)
    if valid.all():
        return depth
    out = d.copy()
    fallback = float(np.median(d[valid])) if valid.any() else float(np.median(d))
    for r in range(h):
        vr = valid[r]
        if vr.all():
            continue
        if not vr.any():
            out[r, :] = fallback
            continue
        # nearest supported column; exact copies keep untouched maps bit-equal
        vi = np.flatnonzero(vr)
        bad = np.flatnonzero(~vr)
        pos = np.searchsorted(vi, bad).clip(1, vi.size - 1) if vi.size > 1 else np.zeros(bad.size, dtype=int)
        if vi.size > 1:
            lo, hi = vi[pos - 1], vi[pos]
            nearest = np.where(bad - lo <= hi - bad, lo, hi)
        else:
            nearest = vi[pos]
        out[r, bad] = d[r, nearest]
    return DepthMap(out)


def optimize_joint(
    frames,
    rig: StereoRig,
    weights: LossWeights,
    schedule: Schedule,
    init_depth: float = 10.0,
    init_depths_left=None,
    init_depths_right=None,
    init_poses=None,
    rot_weight: float = 1.0,
    warm_start: bool = True,
) -> JointResult:
    """Jointly estimate all depth maps and both motion streams of a sequence.

    Depths start flat at init_depth unless explicit maps are given; both
    pose streams start at init_poses (identity by default). With warm_start
    the depth maps are first refined per frame against the spatial losses
    and the motions against the temporal ones, then everything is polished
    under the full objective. Reports the integrated left-stream trajectory
    and the per-step disagreement between the two streams.
    """
    problem = OptimizationProblem(
        frames=list(frames), rig=rig, weights=weights, rot_weight=rot_weight
    )
    n = len(problem.frames)
    h, w = problem._h, problem._w
    flat = DepthMap(np.full((h, w), float(init_depth)))
    depths_l = list(init_depths_left) if init_depths_left is not None else [flat] * n
    depths_r = list(init_depths_right) if init_depths_right is not None else [flat] * n
    poses = (
        list(init_poses) if init_poses is not None else [Pose6DoF.identity()] * (n - 1)
    )
    if warm_start:
        for k, frame in enumerate(problem.frames):
            d_l, d_r, _ = _optimize_frame_depths(
                frame.left, frame.right, rig, depths_l[k], depths_r[k], weights,
                WARM_DEPTH_SCHEDULE,
            )
            depths_l[k] = _median3(_fill_unsupported(d_l, rig, "left"))
            depths_r[k] = _median3(_fill_unsupported(d_r, rig, "right"))
        # the registration term is dropped here: the warm depth maps carry
        # correlated per-pixel noise that biases its pose minimum, while the
        # two photometric directions stay clean
        pose_weights = replace(weights, w_geo=0.0)
        for k in range(n - 1):
            poses[k], _ = optimize_pose_temporal(
                problem.frames[k].left,
                problem.frames[k + 1].left,
                depths_l[k],
                rig.intrinsics,
                poses[k],
                pose_weights,
                WARM_POSE_SCHEDULE,
                depth_k1=depths_l[k + 1],
                rot_weight=rot_weight,
            )
    x0 = problem.pack(depths_l, depths_r, poses, [p for p in poses])
    best_x, best_loss, history = _adam_minimize(problem.loss_and_grad, x0, schedule)
    depths_left, depths_right, poses_left, poses_right = problem.unpack(best_x)
    consistency = [
        (
            float(np.abs(a.translation - b.translation).sum()),
            float(np.abs(a.rotation - b.rotation).sum()),
        )
        for a, b in zip(poses_left, poses_right)
    ]
    return JointResult(
        depths_left=depths_left,
        depths_right=depths_right,
        poses_left=poses_left,
        poses_right=poses_right,
        trajectory=trajectory_from_motions(poses_left),
        consistency=consistency,
        history=history,
        final_loss=best_loss,
    )
