"""Backend equivalence: the numba kernels must reproduce the numpy reference.

Element-wise outputs are required to match exactly (same scalar expression
chains, no fastmath); reductions get a small absolute slack because the
accumulation order differs.
"""

import os
import subprocess
import sys

import numpy as np
import pytest

from stereovo.geometry import Pose6DoF, pose_chain_forward
from stereovo.kernels import numpy_ops

numba = pytest.importorskip("numba")
from stereovo.kernels import numba_ops  # noqa: E402  (needs numba present)

RNG = np.random.default_rng(42)
H, W = 20, 30
FX = FY = 100.0
CX, CY = 14.5, 9.5


def random_chain():
    pose = Pose6DoF(RNG.uniform(-0.5, 0.5, 3), RNG.uniform(-0.3, 0.3, 3))
    return pose_chain_forward(pose)


def test_box_sum3_matches():
    for _ in range(5):
        x = RNG.uniform(-1, 1, (H, W))
        assert np.array_equal(numpy_ops.box_sum3(x), numba_ops.box_sum3(x))


def test_bilinear_forward_matches():
    for channels in (1, 3):
        img = RNG.uniform(0, 1, (H, W, channels))
        # include out-of-frame coordinates so the clamp paths are compared too
        u = RNG.uniform(-2, W + 1, (H, W))
        v = RNG.uniform(-2, H + 1, (H, W))
        for a, b in zip(numpy_ops.bilinear_forward(img, u, v), numba_ops.bilinear_forward(img, u, v)):
            assert np.array_equal(a, b)


def test_bilinear_scatter_matches():
    u = RNG.uniform(0, W - 1, (H, W))
    v = RNG.uniform(0, H - 1, (H, W))
    g = RNG.uniform(-1, 1, (H, W))
    a = numpy_ops.bilinear_scatter(u, v, g, H, W)
    b = numba_ops.bilinear_scatter(u, v, g, H, W)
    assert np.allclose(a, b, rtol=0.0, atol=1e-12)


def test_temporal_map_grad_matches():
    depth = RNG.uniform(4, 20, (H, W))
    for _ in range(3):
        R, t, dR, dt = random_chain()
        outs_np = numpy_ops.temporal_map_grad(depth, FX, FY, CX, CY, R, t, dR, dt, 1e-6)
        outs_nb = numba_ops.temporal_map_grad(depth, FX, FY, CX, CY, R, t, dR, dt, 1e-6)
        for a, b in zip(outs_np, outs_nb):
            assert np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=0.0, atol=1e-12)


def test_geo_direction_matches():
    depth_a = RNG.uniform(4, 20, (H, W))
    depth_b = RNG.uniform(4, 20, (H, W))
    for _ in range(3):
        R, t, dR, dt = random_chain()
        la, ca, gpa, gda, gdba = numpy_ops.geo_direction(depth_a, depth_b, FX, FY, CX, CY, R, t, dR, dt, 1e-6)
        lb, cb, gpb, gdb, gdbb = numba_ops.geo_direction(depth_a, depth_b, FX, FY, CX, CY, R, t, dR, dt, 1e-6)
        assert ca == cb
        assert la == pytest.approx(lb, rel=0.0, abs=1e-10)
        assert np.allclose(gpa, gpb, rtol=0.0, atol=1e-10)
        assert np.allclose(gda, gdb, rtol=0.0, atol=1e-12)
        assert np.allclose(gdba, gdbb, rtol=0.0, atol=1e-12)


def test_backend_flag_selects_numpy():
    code = "import stereovo.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, STEREOVO_NUMBA="0")
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "numpy"


def test_default_backend_is_reported():
    import stereovo.kernels as k

    assert k.BACKEND in ("numpy", "numba")
    assert k.HAS_NUMBA is True
