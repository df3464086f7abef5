"""Pure-numpy implementations of the per-pixel kernels.

These define the reference semantics. The numba twins in numba_ops use the
same arithmetic expressions so both backends agree to float64 round-off;
tests compare them on random inputs.
"""

from __future__ import annotations

import numpy as np


def box_sum3(x: np.ndarray) -> np.ndarray:
    """3x3 window sum; windows are clipped at the border (zero padding)."""
    h, w = x.shape
    padded = np.zeros((h + 2, w + 2))
    padded[1:-1, 1:-1] = x
    out = np.zeros((h, w))
    for dr in range(3):
        for dc in range(3):
            out += padded[dr : dr + h, dc : dc + w]
    return out


def bilinear_forward(img: np.ndarray, u: np.ndarray, v: np.ndarray):
    """Sample img (H, W, C) at (u, v) with clamped borders.

    u runs along columns, v along rows. Returns (val, du, dv) of shape
    (*u.shape, C); the coordinate derivatives saturate to zero wherever the
    clamp is active, and sampling at integer coordinates is exact.
    """
    h, w, _ = img.shape
    x0f = np.floor(u)
    y0f = np.floor(v)
    wx = (u - x0f)[..., None]
    wy = (v - y0f)[..., None]
    x0i = x0f.astype(np.int64)
    y0i = y0f.astype(np.int64)
    x0 = np.clip(x0i, 0, w - 1)
    x1 = np.clip(x0i + 1, 0, w - 1)
    y0 = np.clip(y0i, 0, h - 1)
    y1 = np.clip(y0i + 1, 0, h - 1)
    i00 = img[y0, x0]
    i01 = img[y0, x1]
    i10 = img[y1, x0]
    i11 = img[y1, x1]
    top = i00 + wx * (i01 - i00)
    bot = i10 + wx * (i11 - i10)
    val = top + wy * (bot - top)
    du = (1.0 - wy) * (i01 - i00) + wy * (i11 - i10)
    dv = bot - top
    return val, du, dv


def bilinear_scatter(u: np.ndarray, v: np.ndarray, g: np.ndarray, h_src: int, w_src: int) -> np.ndarray:
    """Adjoint of bilinear_forward for a single-channel source map.

    Distributes the upstream gradient g (same shape as u) onto the four
    source neighbors of every sample location.
    """
    x0f = np.floor(u)
    y0f = np.floor(v)
    wx = u - x0f
    wy = v - y0f
    x0i = x0f.astype(np.int64)
    y0i = y0f.astype(np.int64)
    x0 = np.clip(x0i, 0, w_src - 1)
    x1 = np.clip(x0i + 1, 0, w_src - 1)
    y0 = np.clip(y0i, 0, h_src - 1)
    y1 = np.clip(y0i + 1, 0, h_src - 1)
    out = np.zeros((h_src, w_src))
    np.add.at(out, (y0, x0), (1.0 - wy) * (1.0 - wx) * g)
    np.add.at(out, (y0, x1), (1.0 - wy) * wx * g)
    np.add.at(out, (y1, x0), wy * (1.0 - wx) * g)
    np.add.at(out, (y1, x1), wy * wx * g)
    return out


def _pixel_rays(h, w, fx, fy, cx, cy):
    rows, cols = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
    )
    dirx = (cols - cx) / fx
    diry = (rows - cy) / fy
    return dirx, diry


def temporal_map_grad(depth, fx, fy, cx, cy, R, t, dR, dt, eps_z):
    """Reproject every pixel of a depth map through (R, t), with jacobians.

    dR (6,3,3) and dt (6,3) are the partials of (R, t) w.r.t. six pose
    parameters; they may encode an inverted or conjugated transform chain.

    Returns u, v (-1 where behind the camera), valid (in front and inside
    the frame), du_dp, dv_dp of shape (H, W, 6), and du_dd, dv_dd (H, W).
    """
    h, w = depth.shape
    dirx, diry = _pixel_rays(h, w, fx, fy, cx, cy)
    px = depth * dirx
    py = depth * diry
    pz = depth
    qx = R[0, 0] * px + R[0, 1] * py + R[0, 2] * pz + t[0]
    qy = R[1, 0] * px + R[1, 1] * py + R[1, 2] * pz + t[1]
    qz = R[2, 0] * px + R[2, 1] * py + R[2, 2] * pz + t[2]
    front = qz > eps_z
    iz = np.zeros((h, w))
    iz[front] = 1.0 / qz[front]
    u = np.where(front, fx * qx * iz + cx, -1.0)
    v = np.where(front, fy * qy * iz + cy, -1.0)
    valid = front & (u >= 0.0) & (u <= w - 1.0) & (v >= 0.0) & (v <= h - 1.0)

    du_dqx = fx * iz
    du_dqz = -fx * qx * (iz * iz)
    dv_dqy = fy * iz
    dv_dqz = -fy * qy * (iz * iz)

    fm = front.astype(np.float64)
    du_dp = np.empty((h, w, 6))
    dv_dp = np.empty((h, w, 6))
    for j in range(6):
        aqx = dR[j, 0, 0] * px + dR[j, 0, 1] * py + dR[j, 0, 2] * pz + dt[j, 0]
        aqy = dR[j, 1, 0] * px + dR[j, 1, 1] * py + dR[j, 1, 2] * pz + dt[j, 1]
        aqz = dR[j, 2, 0] * px + dR[j, 2, 1] * py + dR[j, 2, 2] * pz + dt[j, 2]
        du_dp[:, :, j] = (du_dqx * aqx + du_dqz * aqz) * fm
        dv_dp[:, :, j] = (dv_dqy * aqy + dv_dqz * aqz) * fm

    gdx = R[0, 0] * dirx + R[0, 1] * diry + R[0, 2]
    gdy = R[1, 0] * dirx + R[1, 1] * diry + R[1, 2]
    gdz = R[2, 0] * dirx + R[2, 1] * diry + R[2, 2]
    du_dd = (du_dqx * gdx + du_dqz * gdz) * fm
    dv_dd = (dv_dqy * gdy + dv_dqz * gdz) * fm
    return u, v, valid, du_dp, dv_dp, du_dd, dv_dd


def geo_direction(depth_a, depth_b, fx, fy, cx, cy, R, t, dR, dt, eps_z):
    """One direction of the 3D registration loss, forward and backward fused.

    Each pixel of depth_a is lifted, moved through (R, t) and compared with
    the point implied by resampling depth_b at the reprojected location.
    Per-pixel cost is the L1 distance over the three coordinates.

    Returns (loss_sum, count, g_pose, g_da, g_db) where loss_sum and the
    gradients are un-normalized sums over valid pixels.
    """
    h, w = depth_a.shape
    dirx, diry = _pixel_rays(h, w, fx, fy, cx, cy)
    px = depth_a * dirx
    py = depth_a * diry
    pz = depth_a
    qx = R[0, 0] * px + R[0, 1] * py + R[0, 2] * pz + t[0]
    qy = R[1, 0] * px + R[1, 1] * py + R[1, 2] * pz + t[1]
    qz = R[2, 0] * px + R[2, 1] * py + R[2, 2] * pz + t[2]
    front = qz > eps_z
    iz = np.zeros((h, w))
    iz[front] = 1.0 / qz[front]
    u = np.where(front, fx * qx * iz + cx, -1.0)
    v = np.where(front, fy * qy * iz + cy, -1.0)
    valid = front & (u >= 0.0) & (u <= w - 1.0) & (v >= 0.0) & (v <= h - 1.0)
    m = valid.astype(np.float64)
    us = np.where(valid, u, 0.0)
    vs = np.where(valid, v, 0.0)

    val, ddu, ddv = bilinear_forward(depth_b[:, :, None], us, vs)
    d_hat = val[:, :, 0]
    dd_du = ddu[:, :, 0]
    dd_dv = ddv[:, :, 0]

    hx = (us - cx) / fx
    hy = (vs - cy) / fy
    ex = qx - hx * d_hat
    ey = qy - hy * d_hat
    ez = qz - d_hat
    loss_sum = float(np.sum(m * (np.abs(ex) + np.abs(ey) + np.abs(ez))))
    count = int(np.sum(valid))

    # |x| subgradient taken as 0 near the kink (matches the loss module)
    sx = np.where(np.abs(ex) > 1e-12, np.sign(ex), 0.0) * m
    sy = np.where(np.abs(ey) > 1e-12, np.sign(ey), 0.0) * m
    sz = np.where(np.abs(ez) > 1e-12, np.sign(ez), 0.0) * m
    g_dhat = -(sx * hx + sy * hy + sz)
    g_u = -sx * d_hat / fx + g_dhat * dd_du
    g_v = -sy * d_hat / fy + g_dhat * dd_dv

    du_dqx = fx * iz
    du_dqz = -fx * qx * (iz * iz)
    dv_dqy = fy * iz
    dv_dqz = -fy * qy * (iz * iz)
    gqx = sx + g_u * du_dqx
    gqy = sy + g_v * dv_dqy
    gqz = sz + g_u * du_dqz + g_v * dv_dqz

    g_pose = np.empty(6)
    for j in range(6):
        aqx = dR[j, 0, 0] * px + dR[j, 0, 1] * py + dR[j, 0, 2] * pz + dt[j, 0]
        aqy = dR[j, 1, 0] * px + dR[j, 1, 1] * py + dR[j, 1, 2] * pz + dt[j, 1]
        aqz = dR[j, 2, 0] * px + dR[j, 2, 1] * py + dR[j, 2, 2] * pz + dt[j, 2]
        g_pose[j] = np.sum(gqx * aqx + gqy * aqy + gqz * aqz)

    gdx = R[0, 0] * dirx + R[0, 1] * diry + R[0, 2]
    gdy = R[1, 0] * dirx + R[1, 1] * diry + R[1, 2]
    gdz = R[2, 0] * dirx + R[2, 1] * diry + R[2, 2]
    g_da = gqx * gdx + gqy * gdy + gqz * gdz
    g_db = bilinear_scatter(us, vs, g_dhat, h, w)
    return loss_sum, count, g_pose, g_da, g_db
