"""Trajectory and depth evaluation.

Drift is measured KITTI-style: for every start frame and every segment
length in SEGMENT_LENGTHS, the relative motion over the segment is compared
between estimate and reference, the error norm is divided by the actual
segment path length, and the ratios are pooled into an RMSE. All arithmetic
here is plain elementwise/matrix expressions so an independent brute-force
enumeration reproduces the numbers bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConfiguration,
    DimensionMismatch,
    EmptyMask,
    LengthMismatch,
    TooShort,
)
from .geometry import RigidTransform
from .imagegrid import DepthMap

SEGMENT_LENGTHS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)


@dataclass(frozen=True)
class Trajectory:
    """Ordered camera-to-world poses with frame indices."""

    poses: tuple
    indices: tuple = None

    def __post_init__(self):
        if len(self.poses) < 1:
            raise LengthMismatch("a trajectory needs at least one pose")
        object.__setattr__(self, "poses", tuple(self.poses))
        if self.indices is None:
            object.__setattr__(self, "indices", tuple(range(len(self.poses))))
        else:
            object.__setattr__(self, "indices", tuple(self.indices))
        if len(self.indices) != len(self.poses):
            raise LengthMismatch("one index per pose")

    def __len__(self):
        return len(self.poses)

    def positions(self) -> np.ndarray:
        """(N, 3) camera centers in the world frame."""
        return np.array([p.translation for p in self.poses])

    def path_lengths(self) -> np.ndarray:
        """Prefix sums of chord lengths along the reference positions."""
        pos = self.positions()
        out = np.zeros(len(pos))
        for i in range(1, len(pos)):
            d = pos[i] - pos[i - 1]
            out[i] = out[i - 1] + math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        return out


def rotation_angle(R: np.ndarray) -> float:
    """Magnitude of a rotation matrix, radians."""
    c = (R[0, 0] + R[1, 1] + R[2, 2] - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, c)))


# ---------------------------------------------------------------------------
# similarity alignment


def align_sim3(estimate: Trajectory, reference: Trajectory, with_scale: bool = True):
    """Closed-form least-squares similarity fit of estimate onto reference.

    Returns (aligned Trajectory, scale, rotation, translation) minimizing the
    position RMSE; with_scale=False pins the scale to 1 (rigid alignment).
    """
    if len(estimate) != len(reference):
        raise LengthMismatch("trajectories must have equal length")
    n = len(estimate)
    if n < 3:
        raise DegenerateConfiguration("need at least three poses to align")
    x = estimate.positions()
    y = reference.positions()
    mu_x = x.mean(axis=0)
    mu_y = y.mean(axis=0)
    xc = x - mu_x
    yc = y - mu_y
    var_x = float((xc * xc).sum()) / n
    if var_x <= 0:
        raise DegenerateConfiguration("estimate positions are all identical")
    cov = yc.T @ xc / n
    U, d, Vt = np.linalg.svd(cov)
    if d[1] <= 1e-12 * max(d[0], 1e-300):
        raise DegenerateConfiguration("positions are collinear")
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    scale = float(np.trace(np.diag(d) @ S)) / var_x if with_scale else 1.0
    t = mu_y - scale * (R @ mu_x)
    aligned = Trajectory(
        poses=tuple(
            RigidTransform(
                rotation=R @ p.rotation, translation=scale * (R @ p.translation) + t
            )
            for p in estimate.poses
        ),
        indices=estimate.indices,
    )
    return aligned, scale, R, t


# ---------------------------------------------------------------------------
# segment drift


@dataclass(frozen=True)
class LengthBin:
    t_rel: float
    r_rel: float
    segments: int


@dataclass(frozen=True)
class DriftReport:
    """Pooled and per-segment-length drift numbers.

    t_rel is percent of distance traveled, r_rel degrees per 100 m.
    """

    t_rel: float
    r_rel: float
    per_length: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["length_m,t_rel_percent,r_rel_deg_per_100m,segments"]
        for length in sorted(self.per_length):
            b = self.per_length[length]
            lines.append(f"{length:g},{b.t_rel:.17g},{b.r_rel:.17g},{b.segments}")
        total = sum(b.segments for b in self.per_length.values())
        lines.append(f"overall,{self.t_rel:.17g},{self.r_rel:.17g},{total}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        lines = [
            f"translational drift: {self.t_rel:.4f} %",
            f"rotational drift:    {self.r_rel:.4f} deg/100m",
        ]
        for length in sorted(self.per_length):
            b = self.per_length[length]
            lines.append(
                f"  {length:6g} m: t {b.t_rel:8.4f} %   r {b.r_rel:8.4f} deg/100m"
                f"   ({b.segments} segments)"
            )
        return "\n".join(lines) + "\n"


def segment_end(path: np.ndarray, start: int, length: float):
    """First frame whose path length strictly exceeds path[start] + length."""
    target = path[start] + length
    for j in range(start + 1, len(path)):
        if path[j] > target:
            return j
    return None


def segment_error(ref_a, ref_b, est_a, est_b):
    """Relative-motion discrepancy over one segment.

    Returns (translation error norm in meters, rotation error in radians);
    both motions are expressed in their segment-start camera frames.
    """
    r_ref = ref_a.rotation.T @ ref_b.rotation
    t_ref = ref_a.rotation.T @ (ref_b.translation - ref_a.translation)
    r_est = est_a.rotation.T @ est_b.rotation
    t_est = est_a.rotation.T @ (est_b.translation - est_a.translation)
    r_err = r_est.T @ r_ref
    t_err = r_est.T @ (t_ref - t_est)
    t_norm = math.sqrt(t_err[0] * t_err[0] + t_err[1] * t_err[1] + t_err[2] * t_err[2])
    return t_norm, rotation_angle(r_err)


def drift_metrics(estimate: Trajectory, reference: Trajectory) -> DriftReport:
    """KITTI-style segment drift of estimate against reference.

    Segments start at every frame; endpoints come from the reference path
    length. Errors are normalized by the actual segment length, pooled as an
    RMSE and scaled to percent (translation) and degrees per 100 m (rotation).
    """
    if len(estimate) != len(reference):
        raise LengthMismatch("trajectories must have equal length")
    path = reference.path_lengths()
    t_ratios = []
    r_ratios = []
    per_length = {length: ([], []) for length in SEGMENT_LENGTHS}
    for start in range(len(reference)):
        for length in SEGMENT_LENGTHS:
            end = segment_end(path, start, length)
            if end is None:
                continue
            seg_len = path[end] - path[start]
            t_err, r_err = segment_error(
                reference.poses[start],
                reference.poses[end],
                estimate.poses[start],
                estimate.poses[end],
            )
            t_ratios.append(t_err / seg_len)
            r_ratios.append(math.degrees(r_err) / seg_len)
            per_length[length][0].append(t_err / seg_len)
            per_length[length][1].append(math.degrees(r_err) / seg_len)
    if not t_ratios:
        raise TooShort(
            f"reference path ({path[-1]:.1f} m) has no "
            f"{SEGMENT_LENGTHS[0]:.0f} m segment"
        )

    def rms(values):
        a = np.array(values)
        return float(np.sqrt(np.mean(a * a)))

    bins = {}
    for length, (ts, rs) in per_length.items():
        if ts:
            bins[length] = LengthBin(
                t_rel=100.0 * rms(ts), r_rel=100.0 * rms(rs), segments=len(ts)
            )
    return DriftReport(
        t_rel=100.0 * rms(t_ratios), r_rel=100.0 * rms(r_ratios), per_length=bins
    )


# ---------------------------------------------------------------------------
# depth metrics


@dataclass(frozen=True)
class DepthEvalReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float

    def to_csv(self) -> str:
        return (
            "abs_rel,sq_rel,rmse,rmse_log\n"
            f"{self.abs_rel:.17g},{self.sq_rel:.17g},"
            f"{self.rmse:.17g},{self.rmse_log:.17g}\n"
        )

    def to_text(self) -> str:
        return (
            f"abs rel:  {self.abs_rel:.6f}\n"
            f"sq rel:   {self.sq_rel:.6f}\n"
            f"rmse:     {self.rmse:.6f} m\n"
            f"rmse log: {self.rmse_log:.6f}\n"
        )


def depth_metrics(
    pred: DepthMap, gt: DepthMap, cap: float = 80.0, median_scale: bool = False
) -> DepthEvalReport:
    """Standard four-way depth error against ground truth.

    Only pixels with gt in (0, cap] count. median_scale first rescales the
    prediction by median(gt)/median(pred), the usual crutch for scale-free
    methods; leave it off for metrically scaled output.
    """
    if pred.data.shape != gt.data.shape:
        raise DimensionMismatch("prediction and ground truth must match in size")
    valid = gt.data <= cap
    if not valid.any():
        raise EmptyMask(f"no ground-truth pixels at or below {cap:g} m")
    p = pred.data[valid]
    g = gt.data[valid]
    if median_scale:
        p = p * (float(np.median(g)) / float(np.median(p)))
    diff = p - g
    return DepthEvalReport(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff * diff / g)),
        rmse=float(np.sqrt(np.mean(diff * diff))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
    )
