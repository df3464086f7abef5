"""Loss families for direct stereo visual odometry, with analytic gradients.

Five families are combined by total_loss:

* stereo photometric: each view resynthesized from the other through the
  disparity implied by its depth map, scored with a blended SSIM + L1 cost,
* disparity consistency: width-normalized disparity maps cross-warped and
  compared with L1,
* pose consistency: L1 agreement between the motion parameters estimated
  from the left and the right image streams,
* temporal photometric: each frame resynthesized from its successor (and
  the successor from it, through the inverse motion),
* geometric registration: point clouds from consecutive depth maps moved
  into a common frame and compared point-to-point with L1, in both
  directions, with projective data association.

Every function returns the scalar together with gradients w.r.t. whatever
inputs are optimized (depth maps in metric depth units, poses as 6-vectors).
Invalid pixels (out of view, behind the camera) are excluded from every mean
and receive zero gradient. Both image streams share one motion
parameterization expressed in the left camera frame; terms driven by the
right stream conjugate it by the stereo shift internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionMismatch, EmptyMask
from .geometry import (
    EPS_Z,
    Intrinsics,
    Pose6DoF,
    StereoRig,
    chain_conjugate_shift,
    chain_invert,
    pose_chain_forward,
)
from .imagegrid import (
    LEFT_FROM_RIGHT,
    RIGHT_FROM_LEFT,
    DisparitySign,
    DepthMap,
    DisparityMap,
    ImageBuffer,
)

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2

# subgradient of |x| treated as 0 inside this band, so self-consistent
# inputs are true stationary points instead of sign-noise drivers
L1_DEADBAND = 1e-12


def l1_sign(x):
    return np.where(np.abs(x) > L1_DEADBAND, np.sign(x), 0.0)


@dataclass(frozen=True)
class LossWeights:
    """Blend and aggregation weights; defaults follow the reference setup."""

    lambda_s: float = 0.85
    lambda_p: float = 1.0
    lambda_o: float = 1.0
    w_spatial_photo: float = 1.0
    w_disp: float = 1.0
    w_pose: float = 1.0
    w_temporal_photo: float = 1.0
    w_geo: float = 1.0

    def __post_init__(self):
        for name in (
            "lambda_s",
            "lambda_p",
            "lambda_o",
            "w_spatial_photo",
            "w_disp",
            "w_pose",
            "w_temporal_photo",
            "w_geo",
        ):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be non-negative and finite")
            object.__setattr__(self, name, v)
        if self.lambda_s > 1.0:
            raise ValueError("lambda_s must lie in [0, 1]")


@dataclass
class LossValue:
    """Scalar loss, gradients keyed by input name, raw per-family components."""

    scalar: float
    gradients: dict
    components: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# SSIM


def _ssim_channel_stats(a, b, m, inv_n):
    """Masked 3x3 window statistics for one channel."""
    am = a * m
    bm = b * m
    mu_a = kernels.box_sum3(am) * inv_n
    mu_b = kernels.box_sum3(bm) * inv_n
    e_aa = kernels.box_sum3(a * am) * inv_n
    e_bb = kernels.box_sum3(b * bm) * inv_n
    e_ab = kernels.box_sum3(a * bm) * inv_n
    n1 = 2.0 * mu_a * mu_b + SSIM_C1
    d1 = mu_a * mu_a + mu_b * mu_b + SSIM_C1
    n2 = 2.0 * (e_ab - mu_a * mu_b) + SSIM_C2
    d2 = (e_aa - mu_a * mu_a) + (e_bb - mu_b * mu_b) + SSIM_C2
    return mu_a, mu_b, e_bb, e_ab, n1, d1, n2, d2


def ssim(a: ImageBuffer, b: ImageBuffer) -> np.ndarray:
    """Per-pixel SSIM map (3x3 mean-filter statistics), averaged over channels.

    Window statistics are computed over the pixels each clipped window
    actually covers, so border pixels use 4 or 6 neighbors instead of 9.
    """
    if a.data.shape != b.data.shape:
        raise DimensionMismatch("ssim inputs must share one shape")
    h, w, c = a.data.shape
    m = np.ones((h, w))
    inv_n = 1.0 / kernels.box_sum3(m)
    out = np.zeros((h, w))
    for ch in range(c):
        _, _, _, _, n1, d1, n2, d2 = _ssim_channel_stats(
            a.data[:, :, ch], b.data[:, :, ch], m, inv_n
        )
        out += (n1 * n2) / (d1 * d2)
    return out / c


def photometric_loss(
    orig: ImageBuffer, synth: ImageBuffer, mask: np.ndarray, lambda_s: float
) -> LossValue:
    """Blended SSIM + L1 image dissimilarity over valid pixels.

    scalar = lambda_s * mean((1 - ssim) / 2) + (1 - lambda_s) * mean(|diff|),
    means taken over valid pixels and channels. Window statistics ignore
    invalid pixels entirely. Gradient is returned w.r.t. the synthesized
    image under key "synth"; it is zero at invalid pixels.
    """
    if orig.data.shape != synth.data.shape:
        raise DimensionMismatch("photometric inputs must share one shape")
    mask = np.asarray(mask)
    if mask.shape != orig.data.shape[:2]:
        raise DimensionMismatch("mask must be (H, W)")
    m = mask.astype(np.float64)
    n_valid = float(m.sum())
    if n_valid == 0.0:
        raise EmptyMask("photometric loss over an empty mask")
    h, w, c = orig.data.shape
    total = n_valid * c

    n = kernels.box_sum3(m)
    inv_n = np.zeros((h, w))
    nz = n > 0.0
    inv_n[nz] = 1.0 / n[nz]

    grad = np.zeros((h, w, c))
    ssim_sum = 0.0
    l1_sum = 0.0
    for ch in range(c):
        a = orig.data[:, :, ch]
        b = synth.data[:, :, ch]
        mu_a, mu_b, _, _, n1, d1, n2, d2 = _ssim_channel_stats(a, b, m, inv_n)
        s = (n1 * n2) / (d1 * d2)
        dissim = 0.5 * (1.0 - s)
        # float noise can push SSIM a hair past 1 (or a hair under it on
        # bitwise-different but equal inputs); below the deadband the patch
        # counts as identical, loss and gradient both
        pos = dissim > L1_DEADBAND
        ssim_sum += float(np.sum(m * np.where(pos, dissim, 0.0)))

        # upstream dL/ds carries the lambda_s blend and the mean normalizer
        g_s = (-0.5 * lambda_s / total) * m * pos
        ds_dmu_b = (2.0 * mu_a * (n2 - n1)) / (d1 * d2) - 2.0 * mu_b * s * (
            1.0 / d1 - 1.0 / d2
        )
        ds_de_bb = -s / d2
        ds_de_ab = (2.0 * n1) / (d1 * d2)
        grad[:, :, ch] += m * kernels.box_sum3(g_s * ds_dmu_b * inv_n)
        grad[:, :, ch] += m * kernels.box_sum3(g_s * ds_de_bb * inv_n) * (2.0 * b)
        grad[:, :, ch] += m * kernels.box_sum3(g_s * ds_de_ab * inv_n) * a

        diff = a - b
        l1_sum += float(np.sum(m * np.abs(diff)))
        grad[:, :, ch] += (-(1.0 - lambda_s) / total) * m * l1_sign(diff)

    scalar = lambda_s * (ssim_sum / total) + (1.0 - lambda_s) * (l1_sum / total)
    return LossValue(scalar=scalar, gradients={"synth": grad})


# ---------------------------------------------------------------------------
# stereo terms


def _stereo_photometric_term(
    orig: ImageBuffer,
    source: ImageBuffer,
    depth: DepthMap,
    rig: StereoRig,
    direction: str,
    lambda_s: float,
):
    """Resynthesize `orig`'s view from `source` through `depth`.

    Returns (scalar, grad w.r.t. depth). `depth` belongs to the view being
    synthesized (left depth when direction is left_from_right).
    """
    fx = rig.intrinsics.fx
    h, w = depth.data.shape
    disp = rig.baseline * fx / depth.data
    sign = DisparitySign[direction]
    rows, cols = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
    )
    u = cols + sign * disp
    valid = (u >= 0.0) & (u <= w - 1.0)
    val, du, _ = kernels.bilinear_forward(source.data, u, rows)
    pl = photometric_loss(orig, ImageBuffer(val), valid, lambda_s)
    g_u = np.sum(pl.gradients["synth"] * du, axis=2)
    # u = c + sign * B fx / d  =>  du/dd = -sign * B fx / d^2
    g_depth = g_u * (-sign) * rig.baseline * fx / (depth.data * depth.data)
    return pl.scalar, g_depth


def disparity_consistency_loss(
    d_left: DisparityMap, d_right: DisparityMap
) -> LossValue:
    """L1 agreement of width-normalized disparity maps after cross-warping.

    Each side's map (in pixels) drives the warp toward the other side, whose
    normalized map is resampled and compared. Gradients are w.r.t. the two
    pixel-unit disparity maps and include the warp-coordinate paths.
    """
    if d_left.data.shape != d_right.data.shape:
        raise DimensionMismatch("disparity maps must share one shape")
    h, w = d_left.data.shape
    norm_l = d_left.data / float(w)
    norm_r = d_right.data / float(w)
    rows, cols = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
    )
    grad_l = np.zeros((h, w))
    grad_r = np.zeros((h, w))
    scalar = 0.0

    # left view compares its own map against the right map warped into it
    u = cols - d_left.data
    valid = (u >= 0.0) & (u <= w - 1.0)
    n = float(valid.sum())
    if n == 0.0:
        raise EmptyMask("no valid pixels in left disparity warp")
    val, ddu, _ = kernels.bilinear_forward(norm_r[:, :, None], u, rows)
    diff = norm_l - val[:, :, 0]
    s = l1_sign(diff) * valid / n
    scalar += float(np.sum(np.abs(diff)[valid])) / n
    grad_l += s / w + s * ddu[:, :, 0]
    grad_r += kernels.bilinear_scatter(u, rows, -s, h, w) / w

    # mirrored term for the right view
    u2 = cols + d_right.data
    valid2 = (u2 >= 0.0) & (u2 <= w - 1.0)
    n2 = float(valid2.sum())
    if n2 == 0.0:
        raise EmptyMask("no valid pixels in right disparity warp")
    val2, ddu2, _ = kernels.bilinear_forward(norm_l[:, :, None], u2, rows)
    diff2 = norm_r - val2[:, :, 0]
    s2 = l1_sign(diff2) * valid2 / n2
    scalar += float(np.sum(np.abs(diff2)[valid2])) / n2
    grad_r += s2 / w - s2 * ddu2[:, :, 0]
    grad_l += kernels.bilinear_scatter(u2, rows, -s2, h, w) / w

    return LossValue(scalar=scalar, gradients={"d_left": grad_l, "d_right": grad_r})


def pose_consistency_loss(
    left: Pose6DoF, right: Pose6DoF, lambda_p: float = 1.0, lambda_o: float = 1.0
) -> LossValue:
    """Weighted L1 distance between the two streams' motion parameters."""
    dt = left.translation - right.translation
    dr = left.rotation - right.rotation
    scalar = lambda_p * float(np.abs(dt).sum()) + lambda_o * float(np.abs(dr).sum())
    g_left = np.concatenate([lambda_p * l1_sign(dt), lambda_o * l1_sign(dr)])
    return LossValue(
        scalar=scalar, gradients={"pose_left": g_left, "pose_right": -g_left}
    )


# ---------------------------------------------------------------------------
# temporal terms


def _temporal_photometric_term(
    orig: ImageBuffer,
    source: ImageBuffer,
    depth: DepthMap,
    intr: Intrinsics,
    chain,
    lambda_s: float,
):
    """Resynthesize `orig`'s frame from `source` through `depth` and a motion.

    `chain` is (R, t, dR, dt): the transform from `orig`'s frame to
    `source`'s frame and its partials w.r.t. the six pose parameters.
    Returns (scalar, grad w.r.t. depth, grad w.r.t. pose).
    """
    R, t, dR, dt = chain
    u, v, valid, du_dp, dv_dp, du_dd, dv_dd = kernels.temporal_map_grad(
        depth.data, intr.fx, intr.fy, intr.cx, intr.cy, R, t, dR, dt, EPS_Z
    )
    val, du, dv = kernels.bilinear_forward(source.data, u, v)
    pl = photometric_loss(orig, ImageBuffer(val), valid, lambda_s)
    g_u = np.sum(pl.gradients["synth"] * du, axis=2)
    g_v = np.sum(pl.gradients["synth"] * dv, axis=2)
    g_pose = np.empty(6)
    for j in range(6):
        g_pose[j] = float(np.sum(g_u * du_dp[:, :, j] + g_v * dv_dp[:, :, j]))
    g_depth = g_u * du_dd + g_v * dv_dd
    return pl.scalar, g_depth, g_pose


def geometric_registration_loss(
    depth_k: DepthMap,
    depth_k1: DepthMap,
    intr: Intrinsics,
    pose: Pose6DoF,
    conjugate_shift=None,
) -> LossValue:
    """Symmetric 3D registration cost between consecutive depth maps.

    Points from frame k are moved through the motion and compared (L1 over
    the three coordinates, averaged over valid pixels) against the points
    implied by resampling depth_{k+1} at the reprojection; the mirrored term
    uses the inverse motion. `conjugate_shift`, when given, re-expresses the
    motion in a camera displaced by that vector (used for the right stream).
    Gradients cover both depth maps and the six pose parameters.
    """
    if depth_k.data.shape != depth_k1.data.shape:
        raise DimensionMismatch("depth maps must share one shape")
    chain = pose_chain_forward(pose)
    if conjugate_shift is not None:
        chain = chain_conjugate_shift(*chain, conjugate_shift)
    R, t, dR, dt = chain
    Ri, ti, dRi, dti = chain_invert(R, t, dR, dt)
    args = (intr.fx, intr.fy, intr.cx, intr.cy)
    s1, n1, gp1, gda1, gdb1 = kernels.geo_direction(
        depth_k.data, depth_k1.data, *args, R, t, dR, dt, EPS_Z
    )
    s2, n2, gp2, gda2, gdb2 = kernels.geo_direction(
        depth_k1.data, depth_k.data, *args, Ri, ti, dRi, dti, EPS_Z
    )
    if n1 == 0 or n2 == 0:
        raise EmptyMask("no overlap between the two frames")
    scalar = s1 / n1 + s2 / n2
    return LossValue(
        scalar=scalar,
        gradients={
            "depth_k": gda1 / n1 + gdb2 / n2,
            "depth_k1": gdb1 / n1 + gda2 / n2,
            "pose": gp1 / n1 + gp2 / n2,
        },
    )


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class StereoPairObservation:
    """Fixed image data for two consecutive stereo frames."""

    left_k: ImageBuffer
    right_k: ImageBuffer
    left_k1: ImageBuffer
    right_k1: ImageBuffer
    rig: StereoRig


def frame_spatial_terms(
    left: ImageBuffer,
    right: ImageBuffer,
    depth_l: DepthMap,
    depth_r: DepthMap,
    rig: StereoRig,
    weights: LossWeights,
):
    """Stereo photometric and disparity-consistency terms for one frame.

    Returns (photo_raw, disp_raw, g_depth_l, g_depth_r) with the gradients
    already weighted by the family aggregation weights.
    """
    photo_l, g_dl_p = _stereo_photometric_term(
        left, right, depth_l, rig, LEFT_FROM_RIGHT, weights.lambda_s
    )
    photo_r, g_dr_p = _stereo_photometric_term(
        right, left, depth_r, rig, RIGHT_FROM_LEFT, weights.lambda_s
    )
    fx = rig.intrinsics.fx
    disp_l = DisparityMap(rig.baseline * fx / depth_l.data)
    disp_r = DisparityMap(rig.baseline * fx / depth_r.data)
    dis = disparity_consistency_loss(disp_l, disp_r)
    # disparity = B fx / depth  =>  d disp / d depth = -B fx / depth^2
    chain_l = -rig.baseline * fx / (depth_l.data * depth_l.data)
    chain_r = -rig.baseline * fx / (depth_r.data * depth_r.data)
    g_dl = weights.w_spatial_photo * g_dl_p + weights.w_disp * (
        dis.gradients["d_left"] * chain_l
    )
    g_dr = weights.w_spatial_photo * g_dr_p + weights.w_disp * (
        dis.gradients["d_right"] * chain_r
    )
    return photo_l + photo_r, dis.scalar, g_dl, g_dr


def pair_temporal_terms(
    obs: StereoPairObservation,
    depth_l_k: DepthMap,
    depth_r_k: DepthMap,
    depth_l_k1: DepthMap,
    depth_r_k1: DepthMap,
    pose_left: Pose6DoF,
    pose_right: Pose6DoF,
    weights: LossWeights,
):
    """Pose-consistency, temporal photometric and registration terms.

    Returns (pose_raw, temporal_raw, geo_raw, grads) where grads maps
    depth_l_k / depth_r_k / depth_l_k1 / depth_r_k1 / pose_left / pose_right
    to weighted gradients.
    """
    intr = obs.rig.intrinsics
    shift = np.array([-obs.rig.baseline, 0.0, 0.0])

    pc = pose_consistency_loss(pose_left, pose_right, weights.lambda_p, weights.lambda_o)

    grads = {
        "depth_l_k": np.zeros(depth_l_k.data.shape),
        "depth_r_k": np.zeros(depth_r_k.data.shape),
        "depth_l_k1": np.zeros(depth_l_k1.data.shape),
        "depth_r_k1": np.zeros(depth_r_k1.data.shape),
        "pose_left": weights.w_pose * pc.gradients["pose_left"],
        "pose_right": weights.w_pose * pc.gradients["pose_right"],
    }

    temporal_raw = 0.0
    w_tp = weights.w_temporal_photo
    for side, pose_key, imgs, depths, dkeys in (
        ("left", "pose_left", (obs.left_k, obs.left_k1), (depth_l_k, depth_l_k1), ("depth_l_k", "depth_l_k1")),
        ("right", "pose_right", (obs.right_k, obs.right_k1), (depth_r_k, depth_r_k1), ("depth_r_k", "depth_r_k1")),
    ):
        pose = pose_left if side == "left" else pose_right
        chain = pose_chain_forward(pose)
        if side == "right":
            chain = chain_conjugate_shift(*chain, shift)
        chain_inv = chain_invert(*chain)
        # frame k from frame k+1 through the forward motion
        s_fwd, g_d, g_p = _temporal_photometric_term(
            imgs[0], imgs[1], depths[0], intr, chain, weights.lambda_s
        )
        temporal_raw += s_fwd
        grads[dkeys[0]] += w_tp * g_d
        grads[pose_key] += w_tp * g_p
        # frame k+1 from frame k through the inverse motion
        s_bwd, g_d1, g_p1 = _temporal_photometric_term(
            imgs[1], imgs[0], depths[1], intr, chain_inv, weights.lambda_s
        )
        temporal_raw += s_bwd
        grads[dkeys[1]] += w_tp * g_d1
        grads[pose_key] += w_tp * g_p1

    geo_raw = 0.0
    gl = geometric_registration_loss(depth_l_k, depth_l_k1, intr, pose_left)
    geo_raw += gl.scalar
    grads["depth_l_k"] += weights.w_geo * gl.gradients["depth_k"]
    grads["depth_l_k1"] += weights.w_geo * gl.gradients["depth_k1"]
    grads["pose_left"] += weights.w_geo * gl.gradients["pose"]
    gr = geometric_registration_loss(
        depth_r_k, depth_r_k1, intr, pose_right, conjugate_shift=shift
    )
    geo_raw += gr.scalar
    grads["depth_r_k"] += weights.w_geo * gr.gradients["depth_k"]
    grads["depth_r_k1"] += weights.w_geo * gr.gradients["depth_k1"]
    grads["pose_right"] += weights.w_geo * gr.gradients["pose"]

    return pc.scalar, temporal_raw, geo_raw, grads


def total_loss(
    obs: StereoPairObservation,
    depth_l_k: DepthMap,
    depth_r_k: DepthMap,
    depth_l_k1: DepthMap,
    depth_r_k1: DepthMap,
    pose_left: Pose6DoF,
    pose_right: Pose6DoF,
    weights: LossWeights,
) -> LossValue:
    """Weighted sum of all five loss families over a two-frame window.

    Spatial terms are evaluated at both frames; temporal and registration
    terms once per image stream. Gradients are accumulated for all four
    depth maps (keys depth_l_k, depth_r_k, depth_l_k1, depth_r_k1, in metric
    depth units) and both pose parameter vectors (pose_left, pose_right).
    components holds the raw, unweighted family sums.
    """
    photo_k, disp_k, g_dl_k, g_dr_k = frame_spatial_terms(
        obs.left_k, obs.right_k, depth_l_k, depth_r_k, obs.rig, weights
    )
    photo_k1, disp_k1, g_dl_k1, g_dr_k1 = frame_spatial_terms(
        obs.left_k1, obs.right_k1, depth_l_k1, depth_r_k1, obs.rig, weights
    )
    pose_raw, temporal_raw, geo_raw, grads = pair_temporal_terms(
        obs, depth_l_k, depth_r_k, depth_l_k1, depth_r_k1, pose_left, pose_right, weights
    )
    grads["depth_l_k"] += g_dl_k
    grads["depth_r_k"] += g_dr_k
    grads["depth_l_k1"] += g_dl_k1
    grads["depth_r_k1"] += g_dr_k1

    components = {
        "spatial_photo": photo_k + photo_k1,
        "disparity": disp_k + disp_k1,
        "pose_consistency": pose_raw,
        "temporal_photo": temporal_raw,
        "geometric": geo_raw,
    }
    scalar = (
        weights.w_spatial_photo * components["spatial_photo"]
        + weights.w_disp * components["disparity"]
        + weights.w_pose * components["pose_consistency"]
        + weights.w_temporal_photo * components["temporal_photo"]
        + weights.w_geo * components["geometric"]
    )
    return LossValue(scalar=scalar, gradients=grads, components=components)
