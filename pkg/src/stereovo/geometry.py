"""Pinhole projection, rigid-body kinematics and depth/disparity conversions.

Conventions used everywhere in this package:

* camera frame: x right, y down, z forward (optical axis),
* pixel coordinates: u along image columns (horizontal), v along rows,
* Euler angles (roll, pitch, yaw) compose as R = Rz(yaw) @ Ry(pitch) @ Rx(roll),
* the left camera is the reference; the right camera center sits at
  (+baseline, 0, 0) in the left frame with identical orientation,
* relative motion between frames k and k+1 maps coordinates of frame k
  into coordinates of frame k+1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    MalformedRotation,
    NonPositiveDepth,
    NonPositiveDisparity,
)

# Points closer than this along the optical axis are treated as behind the
# camera by every projection in the package (meters).
EPS_Z = 1e-6


def _freeze(obj, name, arr, shape=None, dtype=float):
    arr = np.array(arr, dtype=dtype)
    if shape is not None and arr.shape != shape:
        raise DimensionMismatch(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    object.__setattr__(obj, name, arr)
    return arr


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class StereoRig:
    """Rectified pair: shared intrinsics plus a metric baseline."""

    intrinsics: Intrinsics
    baseline: float

    def __post_init__(self):
        b = float(self.baseline)
        if not math.isfinite(b) or b <= 0:
            raise ValueError("baseline must be positive and finite")
        object.__setattr__(self, "baseline", b)


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class Pose6DoF:
    """Translation (tx, ty, tz) in meters and rotation (roll, pitch, yaw) in radians."""

    translation: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        _freeze(self, "translation", self.translation, (3,))
        _freeze(self, "rotation", self.rotation, (3,))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.translation, self.rotation])

    @classmethod
    def from_vector(cls, vec) -> "Pose6DoF":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (6,):
            raise DimensionMismatch("pose vector must have 6 entries")
        return cls(vec[:3], vec[3:])

    @classmethod
    def identity(cls) -> "Pose6DoF":
        return cls(np.zeros(3), np.zeros(3))


@dataclass(frozen=True)
class RigidTransform:
    """3x3 rotation plus translation; orthonormality enforced to 1e-9."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = _freeze(self, "rotation", self.rotation, (3, 3))
        _freeze(self, "translation", self.translation, (3,))
        err = np.abs(R @ R.T - np.eye(3)).max()
        if err > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise MalformedRotation(
                f"rotation block is off orthonormal by {err:.3e}"
            )

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def matrix34(self) -> np.ndarray:
        return np.hstack([self.rotation, self.translation[:, None]])


# ---------------------------------------------------------------------------
# rotations


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _drot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])


def _drot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


def _drot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def euler_to_matrix(pose: Pose6DoF) -> RigidTransform:
    """Build the rigid transform for a 6-DoF parameter vector."""
    roll, pitch, yaw = pose.rotation
    R = _rot_z(yaw) @ _rot_y(pitch) @ _rot_x(roll)
    return RigidTransform(R, np.array(pose.translation))


def matrix_to_euler(transform: RigidTransform) -> Pose6DoF:
    """Invert euler_to_matrix for pitch strictly inside (-pi/2, pi/2)."""
    R = transform.rotation
    sp = -R[2, 0]
    if abs(sp) >= 1.0 - 1e-12:
        raise ValueError("pitch at +-pi/2 is outside the supported Euler range")
    pitch = math.asin(sp)
    roll = math.atan2(R[2, 1], R[2, 2])
    yaw = math.atan2(R[1, 0], R[0, 0])
    return Pose6DoF(np.array(transform.translation), np.array([roll, pitch, yaw]))


def rotation_derivatives(rotation: np.ndarray):
    """Rotation matrix and its three partials w.r.t. (roll, pitch, yaw).

    Returns (R, dR) with dR of shape (3, 3, 3); dR[i] is the derivative of R
    w.r.t. the i-th Euler angle.
    """
    roll, pitch, yaw = np.asarray(rotation, dtype=float)
    Rx, Ry, Rz = _rot_x(roll), _rot_y(pitch), _rot_z(yaw)
    dR = np.empty((3, 3, 3))
    dR[0] = Rz @ Ry @ _drot_x(roll)
    dR[1] = Rz @ _drot_y(pitch) @ Rx
    dR[2] = _drot_z(yaw) @ Ry @ Rx
    return Rz @ Ry @ Rx, dR


# ---------------------------------------------------------------------------
# rigid transform algebra


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform equal to applying b first, then a."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    RT = t.rotation.T
    return RigidTransform(RT.copy(), -(RT @ t.translation))


def transform_point(t: RigidTransform, p: Point3) -> Point3:
    # spelled out component-wise so results are reproducible to the last bit
    R = t.rotation
    tr = t.translation
    x = R[0, 0] * p.x + R[0, 1] * p.y + R[0, 2] * p.z + tr[0]
    y = R[1, 0] * p.x + R[1, 1] * p.y + R[1, 2] * p.z + tr[1]
    z = R[2, 0] * p.x + R[2, 1] * p.y + R[2, 2] * p.z + tr[2]
    return Point3(x, y, z)


# ---------------------------------------------------------------------------
# pinhole projection


def project(intr: Intrinsics, p: Point3):
    """Project a camera-frame point to pixel coordinates (u, v)."""
    if p.z <= EPS_Z:
        raise NonPositiveDepth(f"cannot project point at z={p.z}")
    u = intr.fx * p.x / p.z + intr.cx
    v = intr.fy * p.y / p.z + intr.cy
    return u, v


def backproject(intr: Intrinsics, u: float, v: float, depth: float) -> Point3:
    """Lift pixel (u, v) to the camera-frame point at the given depth."""
    if depth <= EPS_Z:
        raise NonPositiveDepth(f"cannot backproject depth {depth}")
    x = (u - intr.cx) / intr.fx * depth
    y = (v - intr.cy) / intr.fy * depth
    return Point3(x, y, depth)


# ---------------------------------------------------------------------------
# depth <-> disparity

def depth_to_disparity_px(rig: StereoRig, depth):
    """Horizontal pixel disparity for a rectified rig: baseline * fx / depth."""
    depth = np.asarray(depth, dtype=float)
    if np.any(depth <= 0) or not np.all(np.isfinite(depth)):
        raise NonPositiveDepth("depth must be positive and finite")
    out = rig.baseline * rig.intrinsics.fx / depth
    return float(out) if out.ndim == 0 else out


def disparity_to_depth(rig: StereoRig, disparity_px):
    """Inverse of depth_to_disparity_px."""
    disparity_px = np.asarray(disparity_px, dtype=float)
    if np.any(disparity_px <= 0) or not np.all(np.isfinite(disparity_px)):
        raise NonPositiveDisparity("disparity must be positive and finite")
    out = rig.baseline * rig.intrinsics.fx / disparity_px
    return float(out) if out.ndim == 0 else out


def normalize_disparity(disparity_px, image_width: int):
    """Express pixel disparity as a fraction of the image width."""
    if image_width <= 0:
        raise ValueError("image width must be positive")
    out = np.asarray(disparity_px, dtype=float) / float(image_width)
    return float(out) if out.ndim == 0 else out


def denormalize_disparity(disparity_norm, image_width: int):
    if image_width <= 0:
        raise ValueError("image width must be positive")
    out = np.asarray(disparity_norm, dtype=float) * float(image_width)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# parameter chains
#
# The warping kernels consume a transform (R, t) together with its partials
# w.r.t. the six pose parameters. The helpers below build those partials for
# the plain transform, its inverse, and the versions conjugated by the
# left-to-right stereo shift, so that both image streams can be driven by one
# shared motion parameterization.


def pose_chain_forward(pose: Pose6DoF):
    """(R, t, dR, dt) of T(pose); dR is (6,3,3), dt is (6,3)."""
    R, dRrot = rotation_derivatives(pose.rotation)
    dR = np.zeros((6, 3, 3))
    dt = np.zeros((6, 3))
    for i in range(3):
        dt[i, i] = 1.0
        dR[3 + i] = dRrot[i]
    return R, np.array(pose.translation), dR, dt


def chain_invert(R, t, dR, dt):
    """Chain rule for T -> T^-1 given partials of (R, t)."""
    Ri = R.T.copy()
    ti = -(Ri @ t)
    dRi = np.transpose(dR, (0, 2, 1)).copy()
    dti = np.empty_like(dt)
    for j in range(dt.shape[0]):
        dti[j] = -(dRi[j] @ t) - Ri @ dt[j]
    return Ri, ti, dRi, dti

def chain_conjugate_shift(R, t, dR, dt, shift):
    """Chain rule for T -> X T X^-1 where X translates by `shift`.

    Used to express the right camera's motion through the shared pose
    parameters: with p_right = p_left + shift the conjugated transform is
    (R, t + shift - R @ shift).
    """
    shift = np.asarray(shift, dtype=float)
    tc = t + shift - R @ shift
    dtc = np.empty_like(dt)
    for j in range(dt.shape[0]):
        dtc[j] = dt[j] - dR[j] @ shift
    return R.copy(), tc, dR.copy(), dtc
