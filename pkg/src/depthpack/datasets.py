"""Dataset ingestion, synthetic sequence generation, and manifest handling.

Depth frames load from PFM (32-bit float, scale-line sign gives endianness),
16-bit binary PGM (big-endian samples), or RAWF32 (little-endian float32 with
a JSON sidecar header). Loaders reject structurally invalid input; only
float noise within 1e-6 of the [0, 1] clip range is silently clamped.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .types import (
    CameraState,
    ConfigError,
    DataError,
    DEFAULT_NEAR_FAR,
    DepthMap,
    NearFar,
    TrajectoryError,
)

MANIFEST_VERSION = 1
_CLAMP_TOL = 1e-6
TRAJECTORY_HEADER = "frame,t_seconds,px,py,pz,qw,qx,qy,qz"
SYNTH_KINDS = ("ramp", "orbit", "flythrough", "noise")


def _finish_values(raw: np.ndarray, path) -> np.ndarray:
    if not np.all(np.isfinite(raw)):
        raise DataError(f"non-finite depth samples in {path}")
    lo, hi = float(raw.min(initial=0.0)), float(raw.max(initial=0.0))
    if lo < -_CLAMP_TOL or hi > 1.0 + _CLAMP_TOL:
        raise DataError(f"depth samples outside [0, 1] in {path}: [{lo}, {hi}]")
    return np.clip(raw, 0.0, 1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------

def _read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic == b"PF":
            raise DataError(f"color PFM not supported for depth: {path}")
        if magic != b"Pf":
            raise DataError(f"not a PFM file: {path}")
        dims = fh.readline().decode("ascii", "replace")
        m = re.match(r"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise DataError(f"malformed PFM dimensions in {path}: {dims!r}")
        width, height = int(m.group(1)), int(m.group(2))
        try:
            scale = float(fh.readline().decode("ascii", "replace").strip())
        except ValueError as exc:
            raise DataError(f"malformed PFM scale line in {path}") from exc
        endian = "<" if scale < 0 else ">"
        data = np.fromfile(fh, dtype=endian + "f4", count=width * height)
    if data.size != width * height:
        raise DataError(f"truncated PFM payload in {path}")
    # PFM scanlines run bottom-to-top
    return data.reshape(height, width)[::-1].astype(np.float32)


def _write_pfm(values: np.ndarray, path) -> None:
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(values[::-1].astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# 16-bit PGM
# ---------------------------------------------------------------------------

def _pgm_tokens(data: bytes):
    pos = 0
    while pos < len(data):
        if data[pos : pos + 1].isspace():
            pos += 1
            continue
        if data[pos : pos + 1] == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
            continue
        end = pos
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        yield data[pos:end], end + 1
        pos = end + 1


def _read_pgm16(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = _pgm_tokens(data)
    try:
        magic, _ = next(tokens)
        if magic != b"P5":
            raise DataError(f"not a binary PGM file: {path}")
        width, _ = next(tokens)
        height, _ = next(tokens)
        maxval, payload_start = next(tokens)
        width, height, maxval = int(width), int(height), int(maxval)
    except (StopIteration, ValueError) as exc:
        raise DataError(f"malformed PGM header in {path}") from exc
    if maxval != 65535:
        raise DataError(f"expected 16-bit PGM (maxval 65535), got {maxval} in {path}")
    count = width * height
    samples = np.frombuffer(data, dtype=">u2", count=-1, offset=payload_start)
    if samples.size < count:
        raise DataError(f"truncated PGM payload in {path}")
    return (samples[:count].astype(np.float64) / 65535.0).reshape(height, width)


def _write_pgm16(values: np.ndarray, path) -> None:
    h, w = values.shape
    samples = np.floor(values.astype(np.float64) * 65535.0 + 0.5).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(samples.tobytes())


# ---------------------------------------------------------------------------
# RAWF32 (+ JSON sidecar)
# ---------------------------------------------------------------------------

def _sidecar_path(path) -> str:
    return str(path) + ".json"


def _read_rawf32(path) -> np.ndarray:
    try:
        with open(_sidecar_path(path), "r", encoding="utf-8") as fh:
            head = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"missing RAWF32 sidecar header for {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed RAWF32 sidecar for {path}") from exc
    for key in ("width", "height"):
        if key not in head:
            raise DataError(f"RAWF32 sidecar missing {key!r} for {path}")
    if head.get("dtype", "<f4") != "<f4":
        raise DataError(f"unsupported RAWF32 dtype {head.get('dtype')!r}")
    width, height = int(head["width"]), int(head["height"])
    data = np.fromfile(path, dtype="<f4")
    if data.size != width * height:
        raise DataError(f"truncated RAWF32 payload in {path}")
    return data.reshape(height, width)


def _write_rawf32(values: np.ndarray, path) -> None:
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(values.astype("<f4").tobytes())
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump({"version": 1, "width": w, "height": h, "dtype": "<f4"}, fh)
        fh.write("\n")


_FORMATS = {
    "pfm": (_read_pfm, _write_pfm, ".pfm"),
    "pgm16": (_read_pgm16, _write_pgm16, ".pgm"),
    "rawf32": (_read_rawf32, _write_rawf32, ".rawf32"),
}


def _infer_format(path) -> str:
    ext = os.path.splitext(str(path))[1].lower()
    for name, (_, _, fext) in _FORMATS.items():
        if ext == fext:
            return name
    raise ConfigError(f"cannot infer depth format from extension {ext!r}")


def load_depth(path, fmt: Optional[str] = None, frame_index: int = 0) -> DepthMap:
    """Load one depth frame; values are validated and clamped to [0, 1]."""
    fmt = fmt or _infer_format(path)
    if fmt not in _FORMATS:
        raise ConfigError(f"unknown depth format {fmt!r}")
    try:
        raw = _FORMATS[fmt][0](path)
    except FileNotFoundError as exc:
        raise DataError(f"depth file not found: {path}") from exc
    return DepthMap.from_array(_finish_values(np.asarray(raw), path), frame_index)


def save_depth(dmap: DepthMap, path, fmt: Optional[str] = None) -> None:
    fmt = fmt or _infer_format(path)
    if fmt not in _FORMATS:
        raise ConfigError(f"unknown depth format {fmt!r}")
    _FORMATS[fmt][1](dmap.values, path)


# ---------------------------------------------------------------------------
# Camera trajectory
# ---------------------------------------------------------------------------

def load_trajectory(path) -> List[CameraState]:
    """Read frame,t,position,quaternion rows; quaternions normalized on load."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    except FileNotFoundError as exc:
        raise DataError(f"trajectory file not found: {path}") from exc
    if not lines or lines[0].replace(" ", "") != TRAJECTORY_HEADER:
        raise TrajectoryError(f"trajectory file {path} must start with header "
                              f"{TRAJECTORY_HEADER!r}")
    states: List[CameraState] = []
    last_frame = None
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 9:
            raise TrajectoryError(f"malformed trajectory row: {ln!r}")
        frame = int(parts[0])
        t = float(parts[1])
        pos = np.array([float(x) for x in parts[2:5]])
        quat = np.array([float(x) for x in parts[5:9]])
        if last_frame is not None and frame <= last_frame:
            raise TrajectoryError(f"trajectory frames must strictly increase "
                                  f"(saw {frame} after {last_frame})")
        last_frame = frame
        norm = float(np.linalg.norm(quat))
        if norm < 1e-12:
            raise TrajectoryError(f"zero quaternion at frame {frame}")
        states.append(CameraState(pos, quat / norm, t))
    if not states:
        raise TrajectoryError(f"trajectory file {path} has no rows")
    return states


def write_trajectory(states: Sequence[CameraState], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for i, s in enumerate(states):
            p, q = s.position, s.orientation
            fh.write(
                f"{i},{s.timestamp:.9g},{p[0]:.9g},{p[1]:.9g},{p[2]:.9g},"
                f"{q[0]:.12g},{q[1]:.12g},{q[2]:.12g},{q[3]:.12g}\n"
            )


# ---------------------------------------------------------------------------
# Synthetic sequences
# ---------------------------------------------------------------------------

def _look_at_quaternion(forward: np.ndarray) -> np.ndarray:
    """Quaternion (w, x, y, z) rotating -z onto `forward`, y-up."""
    f = forward / np.linalg.norm(forward)
    up = np.array([0.0, 1.0, 0.0])
    if abs(float(f @ up)) > 0.999:
        up = np.array([0.0, 0.0, 1.0])
    r = np.cross(up, f)
    r /= np.linalg.norm(r)
    u = np.cross(f, r)
    m = np.stack([r, u, -f], axis=1)
    t = np.trace(m)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s,
             (m[1, 0] - m[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(max(1e-12, 1.0 + m[i, i] - m[j, j] - m[k, k])) * 2
        q = np.empty(4)
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
    return q / np.linalg.norm(q)


def _dist_to_depth(dist: np.ndarray, nf: NearFar) -> np.ndarray:
    dist = np.clip(dist, nf.near, nf.far)
    return (nf.near * nf.far / dist - nf.near) / (nf.far - nf.near)


def _ramp_frames(n_frames, width, height, rng):
    xs = np.linspace(0.0, 1.0, width) if width > 1 else np.zeros(1)
    ys = np.linspace(0.0, 1.0, height) if height > 1 else np.zeros(1)
    gx = np.tile(xs, (height, 1))
    gy = np.tile(ys.reshape(-1, 1), (1, width))
    frames = []
    denom = 2.0 * max(1, n_frames - 1)
    for k in range(n_frames):
        alpha = k / denom
        frames.append(((1.0 - alpha) * gx + alpha * gy).astype(np.float32))
    positions = [np.array([0.05 * k, 0.0, 0.0]) for k in range(n_frames)]
    quats = [np.array([1.0, 0.0, 0.0, 0.0])] * n_frames
    return frames, positions, quats


def _orbit_frames(n_frames, width, height, rng, degrees_per_frame=1.0):
    nf = DEFAULT_NEAR_FAR
    sphere_r = 1.5
    # off-center sphere, otherwise every orbit angle renders the same view
    center = np.array([0.8, 0.4, 0.0])
    cam_r = 5.0
    fov = 0.6
    px = (np.arange(width) + 0.5) / width * 2.0 - 1.0
    py = (np.arange(height) + 0.5) / height * 2.0 - 1.0
    gx, gy = np.meshgrid(px * fov, -py * fov)
    frames, positions, quats = [], [], []
    for k in range(n_frames):
        theta = math.radians(degrees_per_frame) * k
        cam = np.array([cam_r * math.sin(theta), 0.0, cam_r * math.cos(theta)])
        f = -cam / np.linalg.norm(cam)
        up = np.array([0.0, 1.0, 0.0])
        right = np.cross(f, up)
        right /= np.linalg.norm(right)
        u = np.cross(right, f)
        dirs = (
            f[None, None, :]
            + gx[..., None] * right[None, None, :]
            + gy[..., None] * u[None, None, :]
        )
        dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
        oc = cam - center
        b = dirs @ oc
        disc = b * b - (oc @ oc - sphere_r**2)
        t = -b - np.sqrt(np.maximum(disc, 0.0))
        hit = (disc >= 0.0) & (t > 0.0)
        zview = np.where(hit, t * (dirs @ f), nf.far)
        frames.append(_dist_to_depth(zview, nf).astype(np.float32))
        positions.append(cam)
        quats.append(_look_at_quaternion(f))
    return frames, positions, quats


def _value_noise(rng, lattice_size=48):
    lattice = rng.standard_normal((lattice_size, lattice_size))

    def sample(xs, ys):
        xs = xs % lattice_size
        ys = ys % lattice_size
        x0 = np.floor(xs).astype(int) % lattice_size
        y0 = np.floor(ys).astype(int) % lattice_size
        x1 = (x0 + 1) % lattice_size
        y1 = (y0 + 1) % lattice_size
        fx = xs - np.floor(xs)
        fy = ys - np.floor(ys)
        v00 = lattice[y0, x0]
        v01 = lattice[y0, x1]
        v10 = lattice[y1, x0]
        v11 = lattice[y1, x1]
        top = v00 * (1 - fx) + v01 * fx
        bot = v10 * (1 - fx) + v11 * fx
        return top * (1 - fy) + bot * fy

    return sample


def _flythrough_frames(n_frames, width, height, rng):
    sample = _value_noise(rng)
    cols = np.arange(width, dtype=np.float64)
    rows = np.arange(height, dtype=np.float64)
    gx, gy = np.meshgrid(cols, rows)
    # row gradient mimics ground receding toward the horizon
    base = 0.15 + 0.55 * (gy / max(1, height - 1))
    octaves = ((0.045, 0.30), (0.18, 0.14), (0.55, 0.12))
    speed = 0.35
    dither_amp = 0.02  # per-frame sensor-style noise; keeps qp=0 cost honest
    frames, positions, quats = [], [], []
    for k in range(n_frames):
        terrain = np.zeros((height, width))
        for scale, amp in octaves:
            terrain += amp * sample(
                (gx + k * speed) * scale, (gy + k * speed * 0.35) * scale
            )
        terrain += dither_amp * rng.uniform(-1.0, 1.0, (height, width))
        frames.append(np.clip(base + terrain, 0.0, 1.0).astype(np.float32))
        positions.append(np.array([k * speed * 0.1, 0.0, 0.0]))
        quats.append(np.array([1.0, 0.0, 0.0, 0.0]))
    return frames, positions, quats


def _noise_frames(n_frames, width, height, rng):
    frames = [
        rng.random((height, width)).astype(np.float32) for _ in range(n_frames)
    ]
    positions = [np.zeros(3)] * n_frames
    quats = [np.array([1.0, 0.0, 0.0, 0.0])] * n_frames
    return frames, positions, quats


def synth_sequence(
    kind: str,
    n_frames: int,
    width: int,
    height: int,
    seed: int,
    fps: float = 30.0,
    **kwargs,
) -> Tuple[List[DepthMap], List[CameraState]]:
    """Generate a deterministic procedural depth sequence with camera states.

    Kinds: planar "ramp", analytic sphere "orbit" (pass
    degrees_per_frame=0 for a static camera), value-noise terrain
    "flythrough", and per-frame iid "noise".
    """
    if n_frames < 1 or width < 1 or height < 1:
        raise ConfigError("n_frames, width, height must all be >= 1")
    rng = np.random.default_rng(seed)
    if kind == "ramp":
        frames, positions, quats = _ramp_frames(n_frames, width, height, rng)
    elif kind == "orbit":
        frames, positions, quats = _orbit_frames(n_frames, width, height, rng, **kwargs)
    elif kind == "flythrough":
        frames, positions, quats = _flythrough_frames(n_frames, width, height, rng)
    elif kind == "noise":
        frames, positions, quats = _noise_frames(n_frames, width, height, rng)
    else:
        raise ConfigError(f"unknown synthetic kind {kind!r}; choose from {SYNTH_KINDS}")
    maps = [
        DepthMap(width, height, f, frame_index=k, timestamp=k / fps)
        for k, f in enumerate(frames)
    ]
    cams = [
        CameraState(p, q, timestamp=k / fps)
        for k, (p, q) in enumerate(zip(positions, quats))
    ]
    return maps, cams


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetManifest:
    """Ordered frame list plus the metadata needed to interpret it."""

    name: str
    fmt: str
    width: int
    height: int
    fps: float
    near_far: NearFar
    frames: Tuple[str, ...]
    trajectory: Optional[str] = None
    base_dir: str = "."

    def __post_init__(self):
        if len(self.frames) < 1:
            raise ConfigError("manifest needs at least one frame")
        if self.fmt not in _FORMATS:
            raise ConfigError(f"unknown depth format {self.fmt!r}")

    def frame_path(self, i: int) -> str:
        return os.path.join(self.base_dir, self.frames[i])

    def trajectory_path(self) -> Optional[str]:
        if self.trajectory is None:
            return None
        return os.path.join(self.base_dir, self.trajectory)

    def load_maps(self) -> List[DepthMap]:
        maps = []
        for i in range(len(self.frames)):
            m = load_depth(self.frame_path(i), self.fmt, frame_index=i)
            if (m.width, m.height) != (self.width, self.height):
                raise DataError(
                    f"frame {self.frames[i]} is {m.width}x{m.height}, manifest "
                    f"says {self.width}x{self.height}"
                )
            maps.append(m)
        return maps

    def load_states(self) -> Optional[List[CameraState]]:
        path = self.trajectory_path()
        return None if path is None else load_trajectory(path)


def write_manifest(manifest: DatasetManifest, path) -> None:
    payload = {
        "version": MANIFEST_VERSION,
        "name": manifest.name,
        "format": manifest.fmt,
        "width": manifest.width,
        "height": manifest.height,
        "fps": manifest.fps,
        "near": manifest.near_far.near,
        "far": manifest.near_far.far,
        "frames": list(manifest.frames),
        "trajectory": manifest.trajectory,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_manifest(path) -> DatasetManifest:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"manifest not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed manifest {path}: {exc}") from exc
    if payload.get("version") != MANIFEST_VERSION:
        raise DataError(
            f"unsupported manifest version {payload.get('version')!r} in {path}"
        )
    base_dir = os.path.dirname(os.path.abspath(str(path)))
    try:
        manifest = DatasetManifest(
            name=payload["name"],
            fmt=payload["format"],
            width=int(payload["width"]),
            height=int(payload["height"]),
            fps=float(payload["fps"]),
            near_far=NearFar(float(payload["near"]), float(payload["far"])),
            frames=tuple(payload["frames"]),
            trajectory=payload.get("trajectory"),
            base_dir=base_dir,
        )
    except KeyError as exc:
        raise DataError(f"manifest {path} missing field {exc}") from exc
    missing = [
        f for i, f in enumerate(manifest.frames)
        if not os.path.exists(manifest.frame_path(i))
    ]
    if manifest.trajectory and not os.path.exists(manifest.trajectory_path()):
        missing.append(manifest.trajectory)
    if missing:
        raise DataError(f"manifest {path} references missing files: {missing[:5]}")
    return manifest


def write_dataset(
    maps: Sequence[DepthMap],
    cams: Optional[Sequence[CameraState]],
    out_dir,
    fmt: str = "rawf32",
    name: str = "synthetic",
    fps: float = 30.0,
    near_far: NearFar = DEFAULT_NEAR_FAR,
) -> str:
    """Write frames (+ optional trajectory) plus a manifest; returns its path."""
    os.makedirs(out_dir, exist_ok=True)
    ext = _FORMATS[fmt][2]
    names = []
    for i, m in enumerate(maps):
        fname = f"frame_{i:05d}{ext}"
        save_depth(m, os.path.join(out_dir, fname), fmt)
        names.append(fname)
    traj_name = None
    if cams is not None:
        traj_name = "trajectory.csv"
        write_trajectory(cams, os.path.join(out_dir, traj_name))
    manifest = DatasetManifest(
        name=name,
        fmt=fmt,
        width=maps[0].width,
        height=maps[0].height,
        fps=fps,
        near_far=near_far,
        frames=tuple(names),
        trajectory=traj_name,
        base_dir=str(out_dir),
    )
    path = os.path.join(out_dir, "manifest.json")
    write_manifest(manifest, path)
    return path
