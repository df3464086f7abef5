import math

import numpy as np
import pytest

from stereovo import (
    DepthMap,
    ImageBuffer,
    MalformedRotation,
    ParseError,
    Pose6DoF,
    Trajectory,
    UnsupportedFormat,
    euler_to_matrix,
    read_depth,
    read_image,
    read_poses,
    write_depth,
    write_image,
    write_poses,
)
from stereovo.geometry import RigidTransform
from stereovo.io_formats import format_config, parse_config, read_config


def random_trajectory(n=7, seed=0):
    rng = np.random.default_rng(seed)
    poses = []
    for _ in range(n):
        r = euler_to_matrix(Pose6DoF(np.zeros(3), rng.uniform(-1.0, 1.0, 3)))
        poses.append(RigidTransform(r.rotation, rng.uniform(-50, 50, 3)))
    return Trajectory(poses=tuple(poses))


# ---------------------------------------------------------------------------
# pose files


def test_pose_round_trip_is_exact(tmp_path):
    traj = random_trajectory()
    path = tmp_path / "poses.txt"
    write_poses(traj, path)
    back = read_poses(path)
    assert len(back) == len(traj)
    for a, b in zip(back.poses, traj.poses):
        # %.17g prints doubles losslessly
        assert np.array_equal(a.rotation, b.rotation)
        assert np.array_equal(a.translation, b.translation)


def test_pose_file_skips_blank_lines(tmp_path):
    path = tmp_path / "poses.txt"
    row = " ".join(["1", "0", "0", "0", "0", "1", "0", "0", "0", "0", "1", "0"])
    path.write_text(row + "\n\n" + row + "\n")
    assert len(read_poses(path)) == 2


def test_pose_wrong_field_count_names_line(tmp_path):
    path = tmp_path / "poses.txt"
    row = "1 0 0 0 0 1 0 0 0 0 1 0"
    path.write_text(row + "\n" + " ".join(["0.0"] * 11) + "\n")
    with pytest.raises(ParseError, match="line 2"):
        read_poses(path)


def test_pose_non_numeric_and_non_finite(tmp_path):
    path = tmp_path / "poses.txt"
    path.write_text(" ".join(["1", "0", "0", "x", "0", "1", "0", "0", "0", "0", "1", "0"]))
    with pytest.raises(ParseError):
        read_poses(path)
    path.write_text(" ".join(["1", "0", "0", "inf", "0", "1", "0", "0", "0", "0", "1", "0"]))
    with pytest.raises(ParseError):
        read_poses(path)


def test_pose_empty_file(tmp_path):
    path = tmp_path / "poses.txt"
    path.write_text("\n\n")
    with pytest.raises(ParseError):
        read_poses(path)


def test_pose_slight_defect_reorthonormalized(tmp_path):
    r = euler_to_matrix(Pose6DoF(np.zeros(3), np.array([0.2, 0.4, -0.3]))).rotation
    bent = r + 3e-7
    row = np.hstack([bent, np.zeros((3, 1))])
    path = tmp_path / "poses.txt"
    path.write_text(" ".join(f"{v:.17g}" for v in row.ravel()) + "\n")
    with pytest.warns(UserWarning, match="re-orthonormalized"):
        traj = read_poses(path)
    fixed = traj.poses[0].rotation
    assert np.abs(fixed.T @ fixed - np.eye(3)).max() < 1e-12


def test_pose_large_defect_rejected(tmp_path):
    row = [1, 0, 0, 0, 0, 1, 0, 0, 0.1, 0, 1, 0]
    path = tmp_path / "poses.txt"
    path.write_text(" ".join(str(v) for v in row) + "\n")
    with pytest.raises(MalformedRotation):
        read_poses(path)


# ---------------------------------------------------------------------------
# depth maps


def test_depth_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    # values already representable in float32, so the trip must be lossless
    data = rng.uniform(0.5, 90.0, (9, 13)).astype(np.float32).astype(np.float64)
    path = tmp_path / "d.pfm"
    write_depth(DepthMap(data), path)
    back = read_depth(path)
    assert np.array_equal(back.data, data)


def test_depth_big_endian_variant(tmp_path):
    rows = np.array([[1.5, 2.5], [3.5, 4.5]], dtype=np.float64)
    path = tmp_path / "d.pfm"
    payload = np.flipud(rows).astype(">f4").tobytes()
    path.write_bytes(b"Pf\n2 2\n1.0\n" + payload)
    assert np.array_equal(read_depth(path).data, rows)


def test_depth_rejects_color_pfm(tmp_path):
    path = tmp_path / "d.pfm"
    path.write_bytes(b"PF\n1 1\n-1\n" + b"\x00" * 12)
    with pytest.raises(UnsupportedFormat):
        read_depth(path)


def test_depth_truncated_raster(tmp_path):
    path = tmp_path / "d.pfm"
    path.write_bytes(b"Pf\n2 2\n-1\n" + b"\x00" * 15)
    with pytest.raises(ParseError):
        read_depth(path)


def test_depth_bad_header(tmp_path):
    path = tmp_path / "d.pfm"
    path.write_bytes(b"Pf\n2 2\n0\n" + b"\x00" * 16)
    with pytest.raises(ParseError):
        read_depth(path)
    path.write_bytes(b"Pf\n0 2\n-1\n")
    with pytest.raises(ParseError):
        read_depth(path)


# ---------------------------------------------------------------------------
# images


def test_pgm_hand_crafted(tmp_path):
    path = tmp_path / "i.pgm"
    path.write_bytes(b"P5\n1 1\n255\n" + bytes([128]))
    img = read_image(path)
    assert img.data.shape == (1, 1, 1)
    assert img.data[0, 0, 0] == 128 / 255


def test_pgm_comment_in_header(tmp_path):
    path = tmp_path / "i.pgm"
    path.write_bytes(b"P5\n# a comment\n2 1\n255\n" + bytes([0, 255]))
    img = read_image(path)
    assert np.array_equal(img.data[:, :, 0], [[0.0, 1.0]])


def test_pgm_16bit_big_endian(tmp_path):
    path = tmp_path / "i.pgm"
    path.write_bytes(b"P5\n1 1\n65535\n" + (256).to_bytes(2, "big"))
    img = read_image(path)
    assert img.data[0, 0, 0] == 256 / 65535


def test_image_round_trip_on_grid_values(tmp_path):
    rng = np.random.default_rng(2)
    for maxval, channels in ((255, 1), (65535, 1), (255, 3)):
        quantized = rng.integers(0, maxval + 1, (6, 5, channels)) / maxval
        img = ImageBuffer(quantized)
        path = tmp_path / f"i_{maxval}_{channels}.pnm"
        write_image(img, path, maxval=maxval)
        back = read_image(path)
        assert np.array_equal(back.data, img.data)


def test_image_header_validation(tmp_path):
    path = tmp_path / "i.pgm"
    path.write_bytes(b"P5\n1 1\n0\n\x00")
    with pytest.raises(ParseError):
        read_image(path)
    path.write_bytes(b"P5\n1 1\n70000\n\x00\x00")
    with pytest.raises(ParseError):
        read_image(path)
    path.write_bytes(b"P5\n1 1\nabc\n\x00")
    with pytest.raises(ParseError):
        read_image(path)
    path.write_bytes(b"P4\n1 1\n255\n\x00")
    with pytest.raises(UnsupportedFormat):
        read_image(path)


def test_image_raster_size_checked(tmp_path):
    path = tmp_path / "i.pgm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes([1, 2, 3]))
    with pytest.raises(ParseError):
        read_image(path)
    path.write_bytes(b"P5\n2 2\n255\n" + bytes([1, 2, 3, 4, 5]))
    with pytest.raises(ParseError):
        read_image(path)


def test_image_sample_exceeding_maxval(tmp_path):
    path = tmp_path / "i.pgm"
    path.write_bytes(b"P5\n1 1\n100\n" + bytes([200]))
    with pytest.raises(ParseError):
        read_image(path)


def test_write_image_rejects_odd_maxval(tmp_path):
    with pytest.raises(UnsupportedFormat):
        write_image(ImageBuffer(np.zeros((2, 2))), tmp_path / "i.pgm", maxval=100)


# ---------------------------------------------------------------------------
# config


def test_config_happy_path():
    cfg = parse_config(
        """
        # scene block
        scene = stairs
        depths = 8.0, 14.0
        width = 64
        lambda_s = 0.85
        motion = 0.2,0,0,0,0,0  # trailing comment
        init = flat
        """
    )
    assert cfg["scene"] == "stairs"
    assert cfg["depths"] == (8.0, 14.0)
    assert cfg["width"] == 64
    assert cfg["motion"] == (0.2, 0.0, 0.0, 0.0, 0.0, 0.0)


def test_config_unknown_key_names_key_and_line():
    with pytest.raises(ParseError, match=r"line 2.*'bogus'"):
        parse_config("width = 32\nbogus = 1\n")


def test_config_duplicate_key():
    with pytest.raises(ParseError, match="duplicate"):
        parse_config("width = 32\nwidth = 64\n")


def test_config_bad_values():
    with pytest.raises(ParseError, match="lambda_s"):
        parse_config("lambda_s = 1.5\n")
    with pytest.raises(ParseError, match="channels"):
        parse_config("channels = 2\n")
    with pytest.raises(ParseError, match="motion"):
        parse_config("motion = 1,2,3\n")
    with pytest.raises(ParseError, match="key = value"):
        parse_config("just some words\n")


def test_config_format_round_trip(tmp_path):
    cfg = {
        "scene": "plane",
        "depths": (10.0,),
        "width": 64,
        "height": 32,
        "lambda_s": 0.85,
        "lr": 1e-3,
        "motion": (0.2, 0.0, 0.0, 0.0, 0.0, 0.0),
        "init": "flat",
    }
    text = format_config(cfg)
    assert parse_config(text) == cfg
    path = tmp_path / "run.cfg"
    path.write_text(text)
    assert read_config(path) == cfg


def test_config_format_rejects_unknown_key():
    with pytest.raises(UnsupportedFormat):
        format_config({"nope": 1})
