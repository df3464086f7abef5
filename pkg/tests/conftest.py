"""Shared scene builders for the test suite."""

import numpy as np
import pytest

from stereovo import (
    Intrinsics,
    Pose6DoF,
    SceneSpec,
    StereoRig,
    TextureSpec,
    render_sequence,
)

# fx=100, B=0.5 and a plane at 10 m put the stereo warp on an exact 5-pixel
# shift, so every ground-truth consistency check is float-noise tight
RIG = StereoRig(Intrinsics(100.0, 100.0, 31.5, 15.5), 0.5)


def plane_spec(seed=7, depth=10.0, width=64, height=32, channels=1, rig=RIG):
    return SceneSpec(
        kind="plane",
        depths=(depth,),
        texture=TextureSpec(seed=seed),
        width=width,
        height=height,
        rig=rig,
        channels=channels,
    )


def stairs_spec(seed=7, depths=(8.0, 14.0), width=64, height=32, rig=RIG):
    return SceneSpec(
        kind="stairs",
        depths=depths,
        texture=TextureSpec(seed=seed),
        width=width,
        height=height,
        rig=rig,
    )


LATERAL_MOTION = Pose6DoF(np.array([0.2, 0.0, 0.0]), np.zeros(3))


@pytest.fixture(scope="session")
def lateral_frames():
    """Three frames under 0.2 m lateral steps: a 2 px integer temporal shift."""
    return render_sequence(plane_spec(), LATERAL_MOTION, n_frames=3)
