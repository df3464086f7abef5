"""File formats: pose lists, PGM/PPM images, PFM depth maps, config files.

Everything here fails closed: malformed input raises ParseError (with a line
number where lines exist) or UnsupportedFormat instead of returning partial
data. Writers emit exactly what the paired reader accepts.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .errors import MalformedRotation, ParseError, UnsupportedFormat
from .evaluation import Trajectory
from .geometry import RigidTransform
from .imagegrid import DepthMap, ImageBuffer

# re-orthonormalize silently-drifted rotations up to here, reject beyond
ROTATION_READ_TOL = 1e-6


# ---------------------------------------------------------------------------
# pose files: one 3x4 row-major camera-to-world matrix per line


def _rotation_defect(R: np.ndarray) -> float:
    return max(
        float(np.abs(R.T @ R - np.eye(3)).max()),
        abs(float(np.linalg.det(R)) - 1.0),
    )


def _read_rotation(R: np.ndarray, line_no: int) -> np.ndarray:
    defect = _rotation_defect(R)
    if defect <= 1e-9:
        return R
    if defect <= ROTATION_READ_TOL:
        U, _, Vt = np.linalg.svd(R)
        fixed = U @ Vt
        if np.linalg.det(fixed) < 0:
            raise MalformedRotation(f"line {line_no}: rotation part is a reflection")
        warnings.warn(
            f"line {line_no}: rotation re-orthonormalized (defect {defect:.2e})",
            stacklevel=3,
        )
        return fixed
    raise MalformedRotation(
        f"line {line_no}: rotation defect {defect:.2e} exceeds {ROTATION_READ_TOL:g}"
    )


def read_poses(path) -> Trajectory:
    """Parse a pose file into a camera-to-world trajectory."""
    poses = []
    with open(path, "r", encoding="ascii") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 12:
                raise ParseError(
                    f"expected 12 fields, got {len(fields)}", line=line_no
                )
            try:
                vals = np.array([float(tok) for tok in fields]).reshape(3, 4)
            except ValueError as e:
                raise ParseError(str(e), line=line_no) from None
            if not np.all(np.isfinite(vals)):
                raise ParseError("non-finite pose entry", line=line_no)
            R = _read_rotation(vals[:, :3], line_no)
            poses.append(RigidTransform(rotation=R, translation=vals[:, 3]))
    if not poses:
        raise ParseError("pose file contains no poses")
    return Trajectory(poses=tuple(poses))


def write_poses(traj: Trajectory, path) -> None:
    with open(path, "w", encoding="ascii") as f:
        for p in traj.poses:
            m = np.hstack([p.rotation, p.translation.reshape(3, 1)])
            f.write(" ".join(f"{v:.17g}" for v in m.ravel()) + "\n")


# ---------------------------------------------------------------------------
# PGM (P5) / PPM (P6) images


def _read_header_token(data: bytes, pos: int):
    """Next whitespace-delimited token, skipping # comments; returns (tok, pos)."""
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < n and data[pos : pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ParseError("truncated header")
    return data[start:pos], pos


def read_image(path) -> ImageBuffer:
    """Read a binary PGM or PPM, scaling samples to [0, 1] by maxval."""
    with open(path, "rb") as f:
        data = f.read()
    magic, pos = _read_header_token(data, 0)
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise UnsupportedFormat(f"unknown image magic {magic!r}")
    tokens = []
    for _ in range(3):
        tok, pos = _read_header_token(data, pos)
        tokens.append(tok)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ParseError("non-integer image header field") from None
    if width < 1 or height < 1:
        raise ParseError("non-positive image dimensions")
    if not 1 <= maxval <= 65535:
        raise ParseError(f"maxval {maxval} out of range")
    pos += 1  # single whitespace byte after maxval
    n_samples = width * height * channels
    if maxval > 255:
        raster = data[pos : pos + 2 * n_samples]
        if len(raster) != 2 * n_samples or pos + 2 * n_samples != len(data):
            raise ParseError("pixel data size does not match header")
        samples = np.frombuffer(raster, dtype=">u2").astype(float)
    else:
        raster = data[pos : pos + n_samples]
        if len(raster) != n_samples or pos + n_samples != len(data):
            raise ParseError("pixel data size does not match header")
        samples = np.frombuffer(raster, dtype=np.uint8).astype(float)
    if samples.max(initial=0.0) > maxval:
        raise ParseError("sample exceeds declared maxval")
    return ImageBuffer((samples / maxval).reshape(height, width, channels))


def write_image(img: ImageBuffer, path, maxval: int = 255) -> None:
    """Write a 1-channel PGM or 3-channel PPM, quantized to maxval steps."""
    if maxval not in (255, 65535):
        raise UnsupportedFormat(f"maxval must be 255 or 65535, got {maxval}")
    magic = b"P5" if img.channels == 1 else b"P6"
    q = np.rint(img.data * maxval)
    raster = (
        q.astype(">u2").tobytes() if maxval > 255 else q.astype(np.uint8).tobytes()
    )
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n%d\n" % (img.width, img.height, maxval))
        f.write(raster)


# ---------------------------------------------------------------------------
# PFM depth maps (float32, bottom-up rows, scale sign encodes endianness)


def read_depth(path) -> DepthMap:
    with open(path, "rb") as f:
        data = f.read()
    magic, pos = _read_header_token(data, 0)
    if magic == b"PF":
        raise UnsupportedFormat("color PFM is not a depth map")
    if magic != b"Pf":
        raise UnsupportedFormat(f"unknown depth magic {magic!r}")
    tokens = []
    for _ in range(3):
        tok, pos = _read_header_token(data, pos)
        tokens.append(tok)
    try:
        width, height = int(tokens[0]), int(tokens[1])
        scale = float(tokens[2])
    except ValueError:
        raise ParseError("malformed depth header") from None
    if width < 1 or height < 1 or scale == 0 or not math.isfinite(scale):
        raise ParseError("bad depth header values")
    pos += 1
    n_bytes = width * height * 4
    raster = data[pos : pos + n_bytes]
    if len(raster) != n_bytes or pos + n_bytes != len(data):
        raise ParseError("depth data size does not match header")
    dt = "<f4" if scale < 0 else ">f4"
    rows = np.frombuffer(raster, dtype=dt).reshape(height, width)
    return DepthMap(np.flipud(rows).astype(float))


def write_depth(depth: DepthMap, path) -> None:
    h, w = depth.data.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n%d %d\n-1\n" % (w, h))
        f.write(np.flipud(depth.data).astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# config files: `key = value` lines, schema-checked


def _float_conv(lo=None, hi=None, lo_open=False):
    def conv(s: str) -> float:
        v = float(s)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        if lo is not None and (v <= lo if lo_open else v < lo):
            raise ValueError(f"must be {'>' if lo_open else '>='} {lo}")
        if hi is not None and v > hi:
            raise ValueError(f"must be <= {hi}")
        return v

    return conv


def _int_conv(lo=None, choices=None):
    def conv(s: str) -> int:
        v = int(s)
        if lo is not None and v < lo:
            raise ValueError(f"must be >= {lo}")
        if choices is not None and v not in choices:
            raise ValueError(f"must be one of {sorted(choices)}")
        return v

    return conv


def _choice_conv(*options):
    def conv(s: str) -> str:
        if s not in options:
            raise ValueError(f"must be one of {options}")
        return s

    return conv


def _floats_conv(count=None, lo=None, hi=None):
    inner = _float_conv(lo=lo, hi=hi)

    def conv(s: str):
        parts = [p.strip() for p in s.split(",")]
        if count is not None and len(parts) != count:
            raise ValueError(f"expected {count} comma-separated values")
        if not parts or any(not p for p in parts):
            raise ValueError("empty value in list")
        return tuple(inner(p) for p in parts)

    return conv


CONFIG_SCHEMA = {
    # scene
    "scene": _choice_conv("plane", "stairs", "slant"),
    "depths": _floats_conv(lo=1.0, hi=200.0),
    "slant": _floats_conv(count=2),
    "width": _int_conv(lo=16),
    "height": _int_conv(lo=16),
    "channels": _int_conv(choices={1, 3}),
    "seed": _int_conv(lo=0),
    "contrast": _float_conv(lo=0.0, hi=0.5, lo_open=True),
    "freq_scale": _float_conv(lo=0.0, lo_open=True),
    "frames": _int_conv(lo=1),
    "motion": _floats_conv(count=6),
    # rig
    "fx": _float_conv(lo=0.0, lo_open=True),
    "fy": _float_conv(lo=0.0, lo_open=True),
    "cx": _float_conv(),
    "cy": _float_conv(),
    "baseline": _float_conv(lo=0.0, lo_open=True),
    # loss weights
    "lambda_s": _float_conv(lo=0.0, hi=1.0),
    "lambda_p": _float_conv(lo=0.0),
    "lambda_o": _float_conv(lo=0.0),
    "w_spatial_photo": _float_conv(lo=0.0),
    "w_disp": _float_conv(lo=0.0),
    "w_pose": _float_conv(lo=0.0),
    "w_temporal_photo": _float_conv(lo=0.0),
    "w_geo": _float_conv(lo=0.0),
    # optimizer
    "lr": _float_conv(lo=0.0, lo_open=True),
    "iterations": _int_conv(lo=1),
    "rot_weight": _float_conv(lo=0.0, lo_open=True),
    "init_depth": _float_conv(lo=0.0, lo_open=True),
    "init": _choice_conv("flat", "ground_truth"),
}


def parse_config(text: str) -> dict:
    """Parse `key = value` lines; unknown and duplicate keys are rejected."""
    out = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected `key = value`", line=line_no)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in CONFIG_SCHEMA:
            raise ParseError(f"unknown key '{key}'", line=line_no)
        if key in out:
            raise ParseError(f"duplicate key '{key}'", line=line_no)
        try:
            out[key] = CONFIG_SCHEMA[key](value)
        except ValueError as e:
            raise ParseError(f"bad value for '{key}': {e}", line=line_no) from None
    return out


def read_config(path) -> dict:
    with open(path, "r", encoding="ascii") as f:
        return parse_config(f.read())


def format_config(cfg: dict) -> str:
    """Serialize a resolved config; parse_config(format_config(c)) == c."""
    lines = []
    for key in sorted(cfg):
        if key not in CONFIG_SCHEMA:
            raise UnsupportedFormat(f"unknown config key '{key}'")
        v = cfg[key]
        if isinstance(v, tuple):
            text = ",".join(f"{x:.17g}" for x in v)
        elif isinstance(v, float):
            text = f"{v:.17g}"
        else:
            text = str(v)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"
