import math

import numpy as np
import pytest

from stereovo import (
    Intrinsics,
    NonPositiveDepth,
    NonPositiveDisparity,
    Point3,
    Pose6DoF,
    RigidTransform,
    StereoRig,
    backproject,
    compose,
    depth_to_disparity_px,
    disparity_to_depth,
    euler_to_matrix,
    invert,
    matrix_to_euler,
    normalize_disparity,
    project,
    transform_point,
)
from stereovo.geometry import (
    chain_conjugate_shift,
    chain_invert,
    denormalize_disparity,
    pose_chain_forward,
    rotation_derivatives,
)

RIG = StereoRig(Intrinsics(100.0, 100.0, 31.5, 15.5), 0.5)


def random_pose(rng, t_scale=1.0, r_scale=0.5):
    # pitch stays well inside (-pi/2, pi/2) so euler round trips are defined
    return Pose6DoF(
        translation=rng.uniform(-t_scale, t_scale, 3),
        rotation=rng.uniform(-r_scale, r_scale, 3),
    )


def test_quarter_turn_about_z_sends_x_to_y():
    T = euler_to_matrix(Pose6DoF(np.zeros(3), np.array([0.0, 0.0, math.pi / 2])))
    assert np.allclose(T.rotation @ np.array([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-15)


def test_euler_matrix_round_trip():
    rng = np.random.default_rng(1)
    for _ in range(50):
        pose = random_pose(rng, t_scale=5.0, r_scale=1.3)
        back = matrix_to_euler(euler_to_matrix(pose))
        assert np.allclose(back.translation, pose.translation, atol=1e-12)
        assert np.allclose(back.rotation, pose.rotation, atol=1e-12)


def test_matrix_to_euler_rejects_gimbal_pitch():
    T = euler_to_matrix(Pose6DoF(np.zeros(3), np.array([0.0, math.pi / 2, 0.0])))
    with pytest.raises(ValueError):
        matrix_to_euler(T)


def test_rotation_matrices_are_orthonormal():
    rng = np.random.default_rng(2)
    for _ in range(20):
        R = euler_to_matrix(random_pose(rng, r_scale=1.5)).rotation
        assert np.allclose(R @ R.T, np.eye(3), atol=1e-14)
        assert abs(np.linalg.det(R) - 1.0) < 1e-14


def test_compose_matches_nested_application():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = euler_to_matrix(random_pose(rng))
        b = euler_to_matrix(random_pose(rng))
        p = Point3(*rng.uniform(-3, 3, 3))
        lhs = transform_point(compose(a, b), p).as_array()
        rhs = transform_point(a, transform_point(b, p)).as_array()
        assert np.allclose(lhs, rhs, atol=1e-10)


def test_invert_is_inverse():
    rng = np.random.default_rng(4)
    for _ in range(20):
        t = euler_to_matrix(random_pose(rng, t_scale=4.0))
        eye = compose(t, invert(t))
        assert np.allclose(eye.rotation, np.eye(3), atol=1e-13)
        assert np.allclose(eye.translation, 0.0, atol=1e-13)


def test_project_backproject_round_trip():
    intr = RIG.intrinsics
    rng = np.random.default_rng(5)
    for _ in range(30):
        u, v, d = rng.uniform(0, 63), rng.uniform(0, 31), rng.uniform(0.5, 50)
        p = backproject(intr, u, v, d)
        u2, v2 = project(intr, p)
        assert abs(u2 - u) < 1e-12 and abs(v2 - v) < 1e-12


def test_projection_rejects_nonpositive_depth():
    intr = RIG.intrinsics
    with pytest.raises(NonPositiveDepth):
        project(intr, Point3(0.0, 0.0, 0.0))
    with pytest.raises(NonPositiveDepth):
        backproject(intr, 5.0, 5.0, -1.0)


def test_disparity_of_ten_meters_is_five_pixels():
    assert depth_to_disparity_px(RIG, 10.0) == 5.0


def test_depth_disparity_round_trip():
    depths = np.array([0.7, 2.5, 10.0, 123.0])
    back = disparity_to_depth(RIG, depth_to_disparity_px(RIG, depths))
    assert np.allclose(back, depths, atol=1e-12)


def test_disparity_errors():
    with pytest.raises(NonPositiveDepth):
        depth_to_disparity_px(RIG, 0.0)
    with pytest.raises(NonPositiveDisparity):
        disparity_to_depth(RIG, np.array([1.0, -2.0]))


def test_normalize_disparity_round_trip():
    d = np.array([0.0, 2.0, 5.0, 63.0])
    n = normalize_disparity(d, 64)
    assert np.allclose(n, d / 64.0, atol=0.0)
    assert np.allclose(denormalize_disparity(n, 64), d, atol=1e-12)
    with pytest.raises(ValueError):
        normalize_disparity(d, 0)


# ---------------------------------------------------------------------------
# pose parameter chains: values and analytic derivatives against FD oracles


def numeric_chain(build, pose, h=1e-7):
    """Central differences of a pose -> RigidTransform map."""
    dR = np.empty((6, 3, 3))
    dt = np.empty((6, 3))
    vec = pose.as_vector()
    for j in range(6):
        hi, lo = vec.copy(), vec.copy()
        hi[j] += h
        lo[j] -= h
        a = build(Pose6DoF.from_vector(hi))
        b = build(Pose6DoF.from_vector(lo))
        dR[j] = (a.rotation - b.rotation) / (2 * h)
        dt[j] = (a.translation - b.translation) / (2 * h)
    return dR, dt


def test_rotation_derivatives_match_fd():
    rng = np.random.default_rng(6)
    for _ in range(10):
        pose = random_pose(rng, r_scale=1.2)
        R, dR = rotation_derivatives(pose.rotation)
        assert np.allclose(R, euler_to_matrix(pose).rotation, atol=1e-15)
        fd_R, _ = numeric_chain(euler_to_matrix, pose)
        assert np.allclose(dR, fd_R[3:], atol=1e-6)


def test_forward_chain_matches_fd():
    rng = np.random.default_rng(7)
    for _ in range(10):
        pose = random_pose(rng)
        R, t, dR, dt = pose_chain_forward(pose)
        T = euler_to_matrix(pose)
        assert np.allclose(R, T.rotation, atol=0.0)
        assert np.allclose(t, T.translation, atol=0.0)
        fd_R, fd_t = numeric_chain(euler_to_matrix, pose)
        assert np.allclose(dR, fd_R, atol=1e-6)
        assert np.allclose(dt, fd_t, atol=1e-6)


def test_inverse_chain_matches_fd():
    rng = np.random.default_rng(8)
    for _ in range(10):
        pose = random_pose(rng)
        R, t, dR, dt = chain_invert(*pose_chain_forward(pose))
        T = invert(euler_to_matrix(pose))
        assert np.allclose(R, T.rotation, atol=1e-14)
        assert np.allclose(t, T.translation, atol=1e-14)
        fd_R, fd_t = numeric_chain(lambda p: invert(euler_to_matrix(p)), pose)
        assert np.allclose(dR, fd_R, atol=1e-6)
        assert np.allclose(dt, fd_t, atol=1e-6)


def test_conjugated_chain_matches_fd():
    rng = np.random.default_rng(9)
    shift = np.array([-0.5, 0.0, 0.0])
    X = RigidTransform(np.eye(3), shift)

    def build(p):
        return compose(X, compose(euler_to_matrix(p), invert(X)))

    for _ in range(10):
        pose = random_pose(rng)
        R, t, dR, dt = chain_conjugate_shift(*pose_chain_forward(pose), shift)
        T = build(pose)
        assert np.allclose(R, T.rotation, atol=1e-14)
        assert np.allclose(t, T.translation, atol=1e-13)
        fd_R, fd_t = numeric_chain(build, pose)
        assert np.allclose(dR, fd_R, atol=1e-6)
        assert np.allclose(dt, fd_t, atol=1e-6)
