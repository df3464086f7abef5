"""Numba-compiled twins of the kernels in numpy_ops.

Same arithmetic expressions pixel by pixel; no fastmath and no parallel
loops so reductions stay deterministic and bit-comparable with the numpy
reference path.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_OPTS = dict(cache=True, fastmath=False, nogil=True)


@njit(**_OPTS)
def box_sum3(x):
    h, w = x.shape
    out = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            s = 0.0
            for dr in range(-1, 2):
                rr = r + dr
                if rr < 0 or rr >= h:
                    continue
                for dc in range(-1, 2):
                    cc = c + dc
                    if cc < 0 or cc >= w:
                        continue
                    s += x[rr, cc]
            out[r, c] = s
    return out


@njit(**_OPTS)
def bilinear_forward(img, u, v):
    h, w, nc = img.shape
    ho, wo = u.shape
    val = np.zeros((ho, wo, nc))
    du = np.zeros((ho, wo, nc))
    dv = np.zeros((ho, wo, nc))
    for r in range(ho):
        for c in range(wo):
            uu = u[r, c]
            vv = v[r, c]
            x0f = np.floor(uu)
            y0f = np.floor(vv)
            wx = uu - x0f
            wy = vv - y0f
            x0 = int(x0f)
            y0 = int(y0f)
            x1 = x0 + 1
            y1 = y0 + 1
            if x0 < 0:
                x0 = 0
            elif x0 > w - 1:
                x0 = w - 1
            if x1 < 0:
                x1 = 0
            elif x1 > w - 1:
                x1 = w - 1
            if y0 < 0:
                y0 = 0
            elif y0 > h - 1:
                y0 = h - 1
            if y1 < 0:
                y1 = 0
            elif y1 > h - 1:
                y1 = h - 1
            for ch in range(nc):
                i00 = img[y0, x0, ch]
                i01 = img[y0, x1, ch]
                i10 = img[y1, x0, ch]
                i11 = img[y1, x1, ch]
                top = i00 + wx * (i01 - i00)
                bot = i10 + wx * (i11 - i10)
                val[r, c, ch] = top + wy * (bot - top)
                du[r, c, ch] = (1.0 - wy) * (i01 - i00) + wy * (i11 - i10)
                dv[r, c, ch] = bot - top
    return val, du, dv


@njit(**_OPTS)
def bilinear_scatter(u, v, g, h_src, w_src):
    ho, wo = u.shape
    out = np.zeros((h_src, w_src))
    for r in range(ho):
        for c in range(wo):
            uu = u[r, c]
            vv = v[r, c]
            x0f = np.floor(uu)
            y0f = np.floor(vv)
            wx = uu - x0f
            wy = vv - y0f
            x0 = int(x0f)
            y0 = int(y0f)
            x1 = x0 + 1
            y1 = y0 + 1
            if x0 < 0:
                x0 = 0
            elif x0 > w_src - 1:
                x0 = w_src - 1
            if x1 < 0:
                x1 = 0
            elif x1 > w_src - 1:
                x1 = w_src - 1
            if y0 < 0:
                y0 = 0
            elif y0 > h_src - 1:
                y0 = h_src - 1
            if y1 < 0:
                y1 = 0
            elif y1 > h_src - 1:
                y1 = h_src - 1
            gg = g[r, c]
            out[y0, x0] += (1.0 - wy) * (1.0 - wx) * gg
            out[y0, x1] += (1.0 - wy) * wx * gg
            out[y1, x0] += wy * (1.0 - wx) * gg
            out[y1, x1] += wy * wx * gg
    return out


@njit(**_OPTS)
def temporal_map_grad(depth, fx, fy, cx, cy, R, t, dR, dt, eps_z):
    h, w = depth.shape
    u = np.empty((h, w))
    v = np.empty((h, w))
    valid = np.zeros((h, w), dtype=np.bool_)
    du_dp = np.zeros((h, w, 6))
    dv_dp = np.zeros((h, w, 6))
    du_dd = np.zeros((h, w))
    dv_dd = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            d = depth[r, c]
            dirx = (c - cx) / fx
            diry = (r - cy) / fy
            px = d * dirx
            py = d * diry
            pz = d
            qx = R[0, 0] * px + R[0, 1] * py + R[0, 2] * pz + t[0]
            qy = R[1, 0] * px + R[1, 1] * py + R[1, 2] * pz + t[1]
            qz = R[2, 0] * px + R[2, 1] * py + R[2, 2] * pz + t[2]
            if qz <= eps_z:
                u[r, c] = -1.0
                v[r, c] = -1.0
                continue
            iz = 1.0 / qz
            uu = fx * qx * iz + cx
            vv = fy * qy * iz + cy
            u[r, c] = uu
            v[r, c] = vv
            valid[r, c] = (
                uu >= 0.0 and uu <= w - 1.0 and vv >= 0.0 and vv <= h - 1.0
            )
            du_dqx = fx * iz
            du_dqz = -fx * qx * (iz * iz)
            dv_dqy = fy * iz
            dv_dqz = -fy * qy * (iz * iz)
            for j in range(6):
                aqx = dR[j, 0, 0] * px + dR[j, 0, 1] * py + dR[j, 0, 2] * pz + dt[j, 0]
                aqy = dR[j, 1, 0] * px + dR[j, 1, 1] * py + dR[j, 1, 2] * pz + dt[j, 1]
                aqz = dR[j, 2, 0] * px + dR[j, 2, 1] * py + dR[j, 2, 2] * pz + dt[j, 2]
                du_dp[r, c, j] = du_dqx * aqx + du_dqz * aqz
                dv_dp[r, c, j] = dv_dqy * aqy + dv_dqz * aqz
            gdx = R[0, 0] * dirx + R[0, 1] * diry + R[0, 2]
            gdy = R[1, 0] * dirx + R[1, 1] * diry + R[1, 2]
            gdz = R[2, 0] * dirx + R[2, 1] * diry + R[2, 2]
            du_dd[r, c] = du_dqx * gdx + du_dqz * gdz
            dv_dd[r, c] = dv_dqy * gdy + dv_dqz * gdz
    return u, v, valid, du_dp, dv_dp, du_dd, dv_dd


@njit(**_OPTS)
def geo_direction(depth_a, depth_b, fx, fy, cx, cy, R, t, dR, dt, eps_z):
    h, w = depth_a.shape
    loss_sum = 0.0
    count = 0
    g_pose = np.zeros(6)
    g_da = np.zeros((h, w))
    g_db = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            d = depth_a[r, c]
            dirx = (c - cx) / fx
            diry = (r - cy) / fy
            px = d * dirx
            py = d * diry
            pz = d
            qx = R[0, 0] * px + R[0, 1] * py + R[0, 2] * pz + t[0]
            qy = R[1, 0] * px + R[1, 1] * py + R[1, 2] * pz + t[1]
            qz = R[2, 0] * px + R[2, 1] * py + R[2, 2] * pz + t[2]
            if qz <= eps_z:
                continue
            iz = 1.0 / qz
            uu = fx * qx * iz + cx
            vv = fy * qy * iz + cy
            if not (uu >= 0.0 and uu <= w - 1.0 and vv >= 0.0 and vv <= h - 1.0):
                continue
            count += 1
            # resample depth_b at (uu, vv)
            x0f = np.floor(uu)
            y0f = np.floor(vv)
            wx = uu - x0f
            wy = vv - y0f
            x0 = int(x0f)
            y0 = int(y0f)
            x1 = x0 + 1
            y1 = y0 + 1
            if x1 > w - 1:
                x1 = w - 1
            if y1 > h - 1:
                y1 = h - 1
            i00 = depth_b[y0, x0]
            i01 = depth_b[y0, x1]
            i10 = depth_b[y1, x0]
            i11 = depth_b[y1, x1]
            top = i00 + wx * (i01 - i00)
            bot = i10 + wx * (i11 - i10)
            d_hat = top + wy * (bot - top)
            dd_du = (1.0 - wy) * (i01 - i00) + wy * (i11 - i10)
            dd_dv = bot - top

            hx = (uu - cx) / fx
            hy = (vv - cy) / fy
            ex = qx - hx * d_hat
            ey = qy - hy * d_hat
            ez = qz - d_hat
            loss_sum += abs(ex) + abs(ey) + abs(ez)
            # |x| subgradient taken as 0 near the kink (matches numpy_ops)
            sx = 0.0
            if ex > 1e-12:
                sx = 1.0
            elif ex < -1e-12:
                sx = -1.0
            sy = 0.0
            if ey > 1e-12:
                sy = 1.0
            elif ey < -1e-12:
                sy = -1.0
            sz = 0.0
            if ez > 1e-12:
                sz = 1.0
            elif ez < -1e-12:
                sz = -1.0

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

            for j in range(6):
                aqx = dR[j, 0, 0] * px + dR[j, 0, 1] * py + dR[j, 0, 2] * pz + dt[j, 0]
                aqy = dR[j, 1, 0] * px + dR[j, 1, 1] * py + dR[j, 1, 2] * pz + dt[j, 1]
                aqz = dR[j, 2, 0] * px + dR[j, 2, 1] * py + dR[j, 2, 2] * pz + dt[j, 2]
                g_pose[j] += gqx * aqx + gqy * aqy + gqz * aqz

            gdx = R[0, 0] * dirx + R[0, 1] * diry + R[0, 2]
            gdy = R[1, 0] * dirx + R[1, 1] * diry + R[1, 2]
            gdz = R[2, 0] * dirx + R[2, 1] * diry + R[2, 2]
            g_da[r, c] = gqx * gdx + gqy * gdy + gqz * gdz

            g_db[y0, x0] += (1.0 - wy) * (1.0 - wx) * g_dhat
            g_db[y0, x1] += (1.0 - wy) * wx * g_dhat
            g_db[y1, x0] += wy * (1.0 - wx) * g_dhat
            g_db[y1, x1] += wy * wx * g_dhat
    return loss_sum, count, g_pose, g_da, g_db
