import math

import numpy as np
import pytest

from stereovo import (
    AdamState,
    DepthMap,
    FrameObservation,
    LengthMismatch,
    LossWeights,
    OptimizationProblem,
    Pose6DoF,
    Schedule,
    adam_step,
    optimize_depth_stereo,
    optimize_joint,
    optimize_pose_temporal,
    render_sequence,
)
from stereovo.optimizer import (
    HISTORY_FIELDS,
    _fill_unsupported,
    _median3,
    trajectory_from_motions,
)

from conftest import LATERAL_MOTION, RIG, plane_spec


# ---------------------------------------------------------------------------
# adam


def test_adam_zero_gradient_leaves_params():
    state = AdamState.zeros(4)
    params = np.array([1.0, -2.0, 0.5, 3.0])
    out, _ = adam_step(state, params, np.zeros(4), 0.1)
    assert np.array_equal(out, params)


def test_adam_first_step_is_signed_lr():
    # bias correction makes m_hat = g and v_hat = g^2 on step one, so the
    # update is lr * sign(g) up to eps
    state = AdamState.zeros(1)
    out, _ = adam_step(state, np.array([1.0]), np.array([2.0]), 0.1)
    assert out[0] == pytest.approx(0.9, abs=1e-8)
    out2, _ = adam_step(state, out, np.array([2.0]), 0.1)
    assert out2[0] == pytest.approx(0.8, abs=1e-7)


def test_adam_shape_mismatch():
    with pytest.raises(LengthMismatch):
        adam_step(AdamState.zeros(3), np.zeros(3), np.zeros(2), 0.1)


def test_schedule_step_decay():
    s = Schedule(lr=1e-3, iterations=1000)
    assert s.lr_at(0) == 1e-3
    assert s.lr_at(199) == 1e-3
    assert s.lr_at(200) == 5e-4
    assert s.lr_at(999) == 1e-3 * 0.5 ** 4
    with pytest.raises(ValueError):
        s.lr_at(-1)
    with pytest.raises(ValueError):
        s.lr_at(1000)
    with pytest.raises(ValueError):
        Schedule(lr=0.0)
    with pytest.raises(ValueError):
        Schedule(iterations=0)


# ---------------------------------------------------------------------------
# problem packing


def test_pack_unpack_round_trip(lateral_frames):
    frames = [FrameObservation(f.left, f.right) for f in lateral_frames[:2]]
    problem = OptimizationProblem(frames=frames, rig=RIG, rot_weight=0.3)
    rng = np.random.default_rng(0)
    depths_l = [DepthMap(rng.uniform(5, 15, (32, 64))) for _ in range(2)]
    depths_r = [DepthMap(rng.uniform(5, 15, (32, 64))) for _ in range(2)]
    poses_l = [Pose6DoF(rng.uniform(-1, 1, 3), rng.uniform(-0.3, 0.3, 3))]
    poses_r = [Pose6DoF(rng.uniform(-1, 1, 3), rng.uniform(-0.3, 0.3, 3))]
    x = problem.pack(depths_l, depths_r, poses_l, poses_r)
    assert x.size == problem.n_params
    dl, dr, pl, pr = problem.unpack(x)
    for a, b in zip(dl + dr, depths_l + depths_r):
        assert np.allclose(a.data, b.data, rtol=1e-14, atol=0.0)
    for a, b in zip(pl + pr, poses_l + poses_r):
        assert np.allclose(a.as_vector(), b.as_vector(), rtol=0.0, atol=1e-15)


def test_problem_rejects_bad_inputs(lateral_frames):
    frames = [FrameObservation(f.left, f.right) for f in lateral_frames[:2]]
    with pytest.raises(LengthMismatch):
        OptimizationProblem(frames=[], rig=RIG)
    problem = OptimizationProblem(frames=frames, rig=RIG)
    with pytest.raises(LengthMismatch):
        problem.pack([DepthMap(np.full((32, 64), 10.0))], [], [], [])


# ---------------------------------------------------------------------------
# helpers


def test_median3_hand_case():
    a = np.arange(1, 10, dtype=float).reshape(3, 3)
    out = _median3(DepthMap(a))
    assert np.array_equal(out.data, [[2, 3, 3], [4, 5, 6], [7, 7, 8]])


def test_median3_removes_outlier():
    a = np.full((3, 3), 10.0)
    a[1, 1] = 400.0
    assert np.array_equal(_median3(DepthMap(a)).data, np.full((3, 3), 10.0))


def test_fill_unsupported_left_border():
    # depth 10 -> disparity 5: columns 0..4 of the left map have no stereo
    # match; they must copy the nearest supported value in their row
    d = np.full((3, 16), 10.0)
    d[:, 5] = 12.0  # disparity 50/12 ~ 4.2 keeps column 5 supported
    out = _fill_unsupported(DepthMap(d), RIG, "left")
    assert np.array_equal(out.data[:, :5], np.full((3, 5), 12.0))
    assert np.array_equal(out.data[:, 5:], d[:, 5:])


def test_fill_unsupported_right_border():
    d = np.full((3, 16), 10.0)
    d[:, 10] = 12.0
    out = _fill_unsupported(DepthMap(d), RIG, "right")
    # u + disp > 15 for columns 11.., filled from column 10
    assert np.array_equal(out.data[:, 11:], np.full((3, 5), 12.0))
    assert np.array_equal(out.data[:, :11], d[:, :11])


def test_fill_unsupported_row_fallback():
    d = np.full((2, 16), 10.0)
    d[0, :] = 1.0  # disparity 50 px: the whole row is unsupported
    out = _fill_unsupported(DepthMap(d), RIG, "left")
    assert np.array_equal(out.data[0], np.full(16, 10.0))


def test_trajectory_from_motions_translation():
    traj = trajectory_from_motions([LATERAL_MOTION, LATERAL_MOTION])
    assert np.allclose(traj.positions(), [[0, 0, 0], [-0.2, 0, 0], [-0.4, 0, 0]], atol=1e-15)


def test_trajectory_from_motions_turn():
    # quarter turn about the vertical axis plus a forward step: the camera
    # ends at +x looking along -x (world pose is the motion's inverse)
    motion = Pose6DoF(np.array([0.0, 0.0, 1.0]), np.array([0.0, math.pi / 2, 0.0]))
    traj = trajectory_from_motions([motion])
    assert np.allclose(traj.poses[1].translation, [1.0, 0.0, 0.0], atol=1e-15)
    expected_r = np.array([[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
    assert np.allclose(traj.poses[1].rotation, expected_r, atol=1e-15)


# ---------------------------------------------------------------------------
# stationarity: self-consistent inputs must not move


def test_depth_optimizer_fixed_at_ground_truth(lateral_frames):
    f = lateral_frames[0]
    d, history = optimize_depth_stereo(
        f.left, f.right, RIG, f.gt_depth_left, LossWeights(), Schedule(lr=1e-2, iterations=100)
    )
    assert history[-1]["total"] < 1e-12
    assert np.max(np.abs(d.data - f.gt_depth_left.data)) < 1e-12


def test_pose_optimizer_fixed_at_ground_truth(lateral_frames):
    a, b = lateral_frames[0], lateral_frames[1]
    pose, history = optimize_pose_temporal(
        a.left,
        b.left,
        a.gt_depth_left,
        RIG.intrinsics,
        LATERAL_MOTION,
        LossWeights(),
        Schedule(lr=1e-3, iterations=100),
        depth_k1=b.gt_depth_left,
    )
    assert history[-1]["total"] < 1e-12
    assert np.max(np.abs(pose.as_vector() - LATERAL_MOTION.as_vector())) < 1e-12


def test_joint_optimizer_fixed_at_ground_truth(lateral_frames):
    frames = [FrameObservation(f.left, f.right) for f in lateral_frames]
    res = optimize_joint(
        frames,
        RIG,
        LossWeights(),
        Schedule(lr=1e-3, iterations=200),
        init_depths_left=[f.gt_depth_left for f in lateral_frames],
        init_depths_right=[f.gt_depth_right for f in lateral_frames],
        init_poses=[LATERAL_MOTION, LATERAL_MOTION],
        warm_start=False,
    )
    assert res.final_loss < 1e-12
    assert max(row["total"] for row in res.history) < 1e-12
    assert np.max(np.abs(res.poses_left[0].as_vector() - LATERAL_MOTION.as_vector())) < 1e-9
    assert np.max(np.abs(res.depths_left[0].data - lateral_frames[0].gt_depth_left.data)) < 1e-9


# ---------------------------------------------------------------------------
# optimization behavior


def test_runs_are_deterministic(lateral_frames):
    f = lateral_frames[0]
    init = DepthMap(np.full((32, 64), 12.0))
    args = (f.left, f.right, RIG, init, LossWeights(), Schedule(lr=3e-2, iterations=60))
    d1, h1 = optimize_depth_stereo(*args)
    d2, h2 = optimize_depth_stereo(*args)
    assert np.array_equal(d1.data, d2.data)
    assert h1 == h2


def test_history_rows_and_best_so_far(lateral_frames):
    f = lateral_frames[0]
    init = DepthMap(np.full((32, 64), 13.0))
    _, history = optimize_depth_stereo(
        f.left, f.right, RIG, init, LossWeights(), Schedule(lr=3e-2, iterations=80)
    )
    assert set(history[0]) == set(HISTORY_FIELDS)
    assert [row["iteration"] for row in history] == list(range(len(history)))
    best = min(row["total"] for row in history)
    assert best <= history[0]["total"]


def test_depth_recovery_from_flat_init(lateral_frames):
    f = lateral_frames[0]
    init = DepthMap(np.full((32, 64), 15.0))
    d, _ = optimize_depth_stereo(
        f.left, f.right, RIG, init, LossWeights(), Schedule(lr=3e-2, iterations=2000)
    )
    median = float(np.median(d.data))
    assert abs(median - 10.0) / 10.0 < 0.02


def test_pose_recovery_from_identity(lateral_frames):
    a, b = lateral_frames[0], lateral_frames[1]
    pose, _ = optimize_pose_temporal(
        a.left,
        b.left,
        a.gt_depth_left,
        RIG.intrinsics,
        Pose6DoF.identity(),
        LossWeights(),
        Schedule(lr=3e-3, iterations=250),
        depth_k1=b.gt_depth_left,
    )
    assert np.abs(pose.translation - LATERAL_MOTION.translation).max() < 2e-3
    assert np.abs(pose.rotation).max() < 2e-4


def test_joint_recovery_tracks_trajectory():
    # five frames retreating along the optical axis; everything estimated
    # from scratch (flat depths, coarse pose guesses)
    motion = Pose6DoF(np.array([0.0, 0.0, 0.2]), np.zeros(3))
    rendered = render_sequence(plane_spec(), motion, n_frames=5)
    frames = [FrameObservation(f.left, f.right) for f in rendered]
    res = optimize_joint(
        frames,
        RIG,
        LossWeights(),
        Schedule(lr=1e-4, iterations=300),
        init_depth=12.0,
        init_poses=[Pose6DoF(np.array([0.0, 0.0, 0.25]), np.zeros(3))] * 4,
        rot_weight=0.3,
    )
    est = res.trajectory.positions()
    gt = np.array([f.camera_pose_world.translation for f in rendered])
    drift = np.linalg.norm(est[-1] - gt[-1]) / 0.8
    assert drift < 0.02
    assert max(c[0] for c in res.consistency) < 1e-3
    assert max(c[1] for c in res.consistency) < 1e-3
    median = float(np.median(res.depths_left[0].data))
    assert abs(median - 10.0) / 10.0 < 0.02
