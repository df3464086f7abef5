"""Image containers, differentiable resampling and warp coordinate maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionMismatch, NonPositiveDepth
from .geometry import EPS_Z, Intrinsics, RigidTransform


@dataclass(frozen=True)
class ImageBuffer:
    """Float64 image with values in [0, 1], stored as (H, W, C), C in {1, 3}."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise DimensionMismatch(f"image must be (H, W, 1|3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image values must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def _plane(obj, name, arr, dtype=np.float64):
    arr = np.ascontiguousarray(np.asarray(arr, dtype=dtype))
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    arr.setflags(write=False)
    object.__setattr__(obj, name, arr)
    return arr


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel metric depth; strictly positive and finite."""

    data: np.ndarray

    def __post_init__(self):
        arr = _plane(self, "data", self.data)
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
            raise NonPositiveDepth("depth map entries must be positive and finite")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class DisparityMap:
    """Per-pixel horizontal disparity in pixels; non-negative and finite."""

    data: np.ndarray

    def __post_init__(self):
        arr = _plane(self, "data", self.data)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
            raise ValueError("disparity entries must be non-negative and finite")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class CoordinateMap:
    """Where each output pixel samples its source, plus a validity mask."""

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        u = _plane(self, "u", self.u)
        v = _plane(self, "v", self.v)
        valid = _plane(self, "valid", self.valid, dtype=np.bool_)
        if u.shape != v.shape or u.shape != valid.shape:
            raise DimensionMismatch("u, v and valid must share one shape")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("coordinates must be finite")


@dataclass(frozen=True)
class SampleJacobian:
    """Per-pixel derivatives of sampled values w.r.t. the sample coordinates."""

    du: np.ndarray
    dv: np.ndarray


def bilinear_sample(image: ImageBuffer, coords: CoordinateMap):
    """Resample an image at coords with clamped borders.

    Returns (values, jacobian); values has the coordinate map's shape and the
    image's channel count. Values at invalid coordinates are still produced
    (border clamped) so callers can mask them out themselves.
    """
    val, du, dv = kernels.bilinear_forward(image.data, coords.u, coords.v)
    # clamped resampling of a valid image cannot leave [0, 1]
    return ImageBuffer(val), SampleJacobian(du=du, dv=dv)


LEFT_FROM_RIGHT = "left_from_right"
RIGHT_FROM_LEFT = "right_from_left"

# Sign of the column shift applied when sampling the other view. A scene
# point appears further left in the right image, so synthesizing the left
# view samples the right image at (column - disparity) and vice versa.
DisparitySign = {LEFT_FROM_RIGHT: -1.0, RIGHT_FROM_LEFT: 1.0}


def stereo_coordinate_map(disparity: DisparityMap, direction: str) -> CoordinateMap:
    """Column-shift map between rectified views.

    direction "left_from_right" treats `disparity` as the left view's map
    and samples the right image; "right_from_left" is the mirror case.
    Pixels whose shifted column leaves [0, width-1] are masked invalid.
    """
    if direction not in DisparitySign:
        raise ValueError(f"unknown direction {direction!r}")
    h, w = disparity.data.shape
    rows, cols = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
    )
    u = cols + DisparitySign[direction] * disparity.data
    valid = (u >= 0.0) & (u <= w - 1.0)
    return CoordinateMap(u=u, v=rows, valid=valid)


def temporal_coordinate_map(
    intr: Intrinsics, depth: DepthMap, motion: RigidTransform
) -> CoordinateMap:
    """Reprojection map into the next frame for a depth map and relative motion.

    Pixels behind the camera after the motion, or landing outside the frame,
    are masked invalid. An exactly-identity motion returns the integer pixel
    grid so that resampling reproduces the source bit for bit.
    """
    h, w = depth.data.shape
    if np.array_equal(motion.rotation, np.eye(3)) and not motion.translation.any():
        rows, cols = np.meshgrid(
            np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
        )
        return CoordinateMap(u=cols, v=rows, valid=np.ones((h, w), dtype=bool))
    zeros_r = np.zeros((6, 3, 3))
    zeros_t = np.zeros((6, 3))
    u, v, valid, *_ = kernels.temporal_map_grad(
        depth.data,
        intr.fx,
        intr.fy,
        intr.cx,
        intr.cy,
        np.ascontiguousarray(motion.rotation),
        np.ascontiguousarray(motion.translation),
        zeros_r,
        zeros_t,
        EPS_Z,
    )
    return CoordinateMap(u=u, v=v, valid=valid)


def synthesize(image: ImageBuffer, coords: CoordinateMap):
    """Warp an image by a coordinate map.

    Returns (warped image, valid mask, jacobian). The mask is the coordinate
    map's own validity; values outside it are border-clamped placeholders and
    must not enter any loss.
    """
    warped, jac = bilinear_sample(image, coords)
    return warped, coords.valid.copy(), jac
