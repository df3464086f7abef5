"""Analytic test scenes: textured planes rendered by exact ray casting.

The world is one or two planes carrying a smooth texture (a sum of six
fixed-frequency sinusoids whose phases derive from a seed), so images are
infinitely differentiable in the scene coordinates and ground-truth depth is
exact. Rendering the same spec twice gives bit-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry, DimensionMismatch, LengthMismatch
from .geometry import (
    EPS_Z,
    Pose6DoF,
    RigidTransform,
    StereoRig,
    compose,
    euler_to_matrix,
    invert,
)
from .imagegrid import DepthMap, ImageBuffer

# cycles per meter along (x, y); fixed so only phases vary with the seed
_BASE_FREQS = np.array(
    [
        [0.11, 0.05],
        [0.04, 0.17],
        [0.10, 0.10],
        [0.23, 0.08],
        [0.07, 0.26],
        [0.15, 0.18],
    ]
)

PLANE = "plane"
STAIRS = "stairs"
SLANT = "slant"
_KINDS = (PLANE, STAIRS, SLANT)


@dataclass(frozen=True)
class TextureSpec:
    """Sinusoid texture: fixed frequencies, seed-derived phases."""

    seed: int = 7
    contrast: float = 0.42
    freq_scale: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.contrast <= 0.5):
            raise ValueError("contrast must lie in (0, 0.5]")
        if self.freq_scale <= 0.0:
            raise ValueError("freq_scale must be positive")

    def phases(self) -> np.ndarray:
        """(3, 6) phase table; channel c of any render uses row c."""
        rng = np.random.default_rng(self.seed)
        return rng.uniform(0.0, 2.0 * math.pi, size=(3, _BASE_FREQS.shape[0]))


def texture_value(tex: TextureSpec, x, y, channel: int = 0):
    """Texture intensity at plane coordinates (x, y); values in (0, 1)."""
    phases = tex.phases()[channel]
    freqs = _BASE_FREQS * tex.freq_scale
    amp = tex.contrast / freqs.shape[0]
    out = np.full(np.broadcast(x, y).shape, 0.5)
    for i in range(freqs.shape[0]):
        arg = 2.0 * math.pi * (freqs[i, 0] * np.asarray(x) + freqs[i, 1] * np.asarray(y))
        out = out + amp * np.sin(arg + phases[i])
    return out


def texture_gradient(tex: TextureSpec, x, y, channel: int = 0):
    """Analytic (d/dx, d/dy) of texture_value."""
    phases = tex.phases()[channel]
    freqs = _BASE_FREQS * tex.freq_scale
    amp = tex.contrast / freqs.shape[0]
    gx = np.zeros(np.broadcast(x, y).shape)
    gy = np.zeros_like(gx)
    for i in range(freqs.shape[0]):
        arg = 2.0 * math.pi * (freqs[i, 0] * np.asarray(x) + freqs[i, 1] * np.asarray(y))
        c = amp * np.cos(arg + phases[i]) * 2.0 * math.pi
        gx = gx + c * freqs[i, 0]
        gy = gy + c * freqs[i, 1]
    return gx, gy


@dataclass(frozen=True)
class SceneSpec:
    """A renderable scene: geometry kind, sizes, rig and texture.

    kinds:
      plane  -- fronto-parallel plane at depths[0] (world z),
      stairs -- two fronto-parallel half-planes, depths[0] for world x < 0
                and depths[1] for x >= 0,
      slant  -- plane z = depths[0] + slant[0] * x + slant[1] * y.
    """

    kind: str
    depths: tuple
    texture: TextureSpec
    width: int
    height: int
    rig: StereoRig
    channels: int = 1
    slant: tuple = (0.25, 0.0)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}")
        depths = tuple(float(d) for d in self.depths)
        if not depths or any(not (1.0 <= d <= 200.0) for d in depths):
            raise ValueError("plane depths must lie in [1, 200] meters")
        if self.kind == STAIRS and len(depths) < 2:
            raise ValueError("stairs needs two depths")
        object.__setattr__(self, "depths", depths)
        object.__setattr__(self, "slant", tuple(float(s) for s in self.slant))
        if self.width < 16 or self.height < 16:
            raise ValueError("images smaller than 16x16 are not supported")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")


@dataclass(frozen=True)
class RenderedFrame:
    left: ImageBuffer
    right: ImageBuffer
    gt_depth_left: DepthMap
    gt_depth_right: DepthMap
    camera_pose_world: RigidTransform  # left camera to world


def _plane_hits(spec: SceneSpec, origin, dirs_w):
    """Ray parameter t of the scene surface for every pixel ray.

    dirs_w is (H, W, 3) with camera-frame z component 1, so t equals the
    camera-frame depth of the hit.
    """

    def intersect(normal, offset):
        denom = dirs_w @ normal
        if np.any(np.abs(denom) < 1e-12):
            raise DegenerateGeometry("ray parallel to scene plane")
        return (offset - origin @ normal) / denom

    if spec.kind == PLANE:
        t = intersect(np.array([0.0, 0.0, 1.0]), spec.depths[0])
    elif spec.kind == SLANT:
        sx, sy = spec.slant
        t = intersect(np.array([-sx, -sy, 1.0]), spec.depths[0])
    else:  # stairs
        t1 = intersect(np.array([0.0, 0.0, 1.0]), spec.depths[0])
        t2 = intersect(np.array([0.0, 0.0, 1.0]), spec.depths[1])
        x1 = origin[0] + t1 * dirs_w[:, :, 0]
        x2 = origin[0] + t2 * dirs_w[:, :, 0]
        ok1 = x1 < 0.0
        ok2 = x2 >= 0.0
        # rays crossing the step edge see the farther plane
        t = np.where(ok1 & ok2, np.minimum(t1, t2), np.maximum(t1, t2))
        t = np.where(ok1 & ~ok2, t1, t)
        t = np.where(ok2 & ~ok1, t2, t)
    if np.any(t <= EPS_Z):
        raise DegenerateGeometry("scene surface behind the camera")
    return t


def _render_view(spec: SceneSpec, cam: RigidTransform):
    intr = spec.rig.intrinsics
    rows, cols = np.meshgrid(
        np.arange(spec.height, dtype=np.float64),
        np.arange(spec.width, dtype=np.float64),
        indexing="ij",
    )
    dirs_c = np.stack(
        [(cols - intr.cx) / intr.fx, (rows - intr.cy) / intr.fy, np.ones_like(cols)],
        axis=-1,
    )
    dirs_w = dirs_c @ cam.rotation.T
    t = _plane_hits(spec, cam.translation, dirs_w)
    hit_x = cam.translation[0] + t * dirs_w[:, :, 0]
    hit_y = cam.translation[1] + t * dirs_w[:, :, 1]
    img = np.empty((spec.height, spec.width, spec.channels))
    for ch in range(spec.channels):
        img[:, :, ch] = texture_value(spec.texture, hit_x, hit_y, ch)
    return ImageBuffer(img), DepthMap(t)


def render_frame(spec: SceneSpec, camera_pose: RigidTransform = None) -> RenderedFrame:
    """Render the stereo pair observed from a left-camera world pose."""
    if camera_pose is None:
        camera_pose = RigidTransform.identity()
    left, depth_l = _render_view(spec, camera_pose)
    right_center = camera_pose.translation + camera_pose.rotation @ np.array(
        [spec.rig.baseline, 0.0, 0.0]
    )
    right_pose = RigidTransform(camera_pose.rotation.copy(), right_center)
    right, depth_r = _render_view(spec, right_pose)
    return RenderedFrame(
        left=left,
        right=right,
        gt_depth_left=depth_l,
        gt_depth_right=depth_r,
        camera_pose_world=camera_pose,
    )


def render_sequence(spec: SceneSpec, motions, n_frames: int = None):
    """Render a camera path given per-step relative motions.

    `motions` is either a single Pose6DoF applied at every step (then
    n_frames is required) or a list with one motion per step. Each motion
    maps coordinates of frame k into frame k+1, so the world pose updates by
    its inverse. Returns the list of RenderedFrames; the exact ground-truth
    relative pose between consecutive frames is the input motion.
    """
    if isinstance(motions, Pose6DoF):
        if n_frames is None or n_frames < 1:
            raise LengthMismatch("n_frames must be given with a single motion")
        motions = [motions] * (n_frames - 1)
    else:
        motions = list(motions)
        if n_frames is not None and n_frames != len(motions) + 1:
            raise LengthMismatch("n_frames disagrees with the motion list")
    pose = RigidTransform.identity()
    frames = [render_frame(spec, pose)]
    for m in motions:
        pose = compose(pose, invert(euler_to_matrix(m)))
        frames.append(render_frame(spec, pose))
    return frames
