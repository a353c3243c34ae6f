"""Shared domain types: depth maps, packed YUV frames, camera metadata, and
the 8-bit plane arithmetic every other module builds on.

All types are immutable after construction (backing arrays are marked
read-only) and all operations here are pure functions, so values can be
shared freely across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np


class DepthPackError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DepthPackError, ValueError):
    """Invalid configuration or parameter value (CLI exit code 2)."""


class DataError(DepthPackError, ValueError):
    """Malformed or inconsistent input data (CLI exit code 3)."""


class DimensionError(DataError):
    """Array dimensions violate an operation's requirements."""


class TrajectoryError(DataError):
    """Camera trajectory is unusable (non-monotone time, zero quaternion)."""


class ChromaMode(enum.Enum):
    FULL444 = "444"
    SUB420 = "420"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def quantize8(x) -> np.ndarray:
    """Map [0, 1] channel values to 8-bit samples.

    Uses the package-wide rounding rule floor(x + 0.5) (round half up) so
    every real-to-sample conversion is bit-exact reproducible.
    """
    arr = np.asarray(x, dtype=np.float64)
    return np.clip(np.floor(arr * 255.0 + 0.5), 0.0, 255.0).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Grid of normalized nonlinear depth values in [0, 1], 1 = near plane."""

    width: int
    height: int
    values: np.ndarray  # float32, shape (height, width), row-major
    frame_index: int = 0
    timestamp: Optional[float] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim == 1:
            if v.size != self.width * self.height:
                raise DimensionError(
                    f"depth values length {v.size} != {self.width}x{self.height}"
                )
            v = v.reshape(self.height, self.width)
        if v.shape != (self.height, self.width):
            raise DimensionError(
                f"depth values shape {v.shape} != ({self.height}, {self.width})"
            )
        if self.width < 1 or self.height < 1:
            raise DimensionError("depth map must be at least 1x1")
        if not np.all(np.isfinite(v)):
            raise DataError("depth values must be finite")
        if v.size and (float(v.min()) < 0.0 or float(v.max()) > 1.0):
            raise DataError("depth values must lie in [0, 1]")
        object.__setattr__(self, "values", _readonly(v))

    @classmethod
    def from_array(cls, values, frame_index: int = 0, timestamp=None) -> "DepthMap":
        v = np.asarray(values, dtype=np.float32)
        if v.ndim != 2:
            raise DimensionError("expected a 2-d array")
        return cls(v.shape[1], v.shape[0], v, frame_index, timestamp)


@dataclass(frozen=True, eq=False)
class CameraState:
    """Camera pose sample: position, unit quaternion (w, x, y, z), time."""

    position: np.ndarray
    orientation: np.ndarray
    timestamp: float

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64).reshape(3)
        q = np.asarray(self.orientation, dtype=np.float64).reshape(4)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise DataError("camera state must be finite")
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > 1e-6:
            raise DataError(f"quaternion norm {norm} not within 1e-6 of 1")
        object.__setattr__(self, "position", _readonly(p))
        object.__setattr__(self, "orientation", _readonly(q))


@dataclass(frozen=True)
class NearFar:
    """Camera clip distances in scene units."""

    near: float
    far: float

    def __post_init__(self):
        if not (0.0 < self.near < self.far):
            raise ConfigError(f"need 0 < near < far, got {self.near}, {self.far}")


DEFAULT_NEAR_FAR = NearFar(0.1, 100.0)


@dataclass(frozen=True, eq=False)
class PackedFrame:
    """Three 8-bit planes holding packed depth, full-rate or 4:2:0 chroma."""

    width: int
    height: int
    y_plane: np.ndarray
    u_plane: np.ndarray
    v_plane: np.ndarray
    chroma_mode: ChromaMode = ChromaMode.FULL444

    def __post_init__(self):
        y = np.asarray(self.y_plane, dtype=np.uint8)
        u = np.asarray(self.u_plane, dtype=np.uint8)
        v = np.asarray(self.v_plane, dtype=np.uint8)
        if y.shape != (self.height, self.width):
            raise DimensionError(f"Y plane shape {y.shape} != frame dimensions")
        if self.chroma_mode is ChromaMode.FULL444:
            cshape = (self.height, self.width)
        else:
            if self.width % 2 or self.height % 2:
                raise DimensionError("Sub420 requires even width and height")
            cshape = (self.height // 2, self.width // 2)
        if u.shape != cshape or v.shape != cshape:
            raise DimensionError(
                f"chroma plane shapes {u.shape}/{v.shape} != {cshape} "
                f"for {self.chroma_mode.value}"
            )
        object.__setattr__(self, "y_plane", _readonly(y))
        object.__setattr__(self, "u_plane", _readonly(u))
        object.__setattr__(self, "v_plane", _readonly(v))


@dataclass(frozen=True)
class PackingConfig:
    """Packing scheme selector: VBP with 8..24 bits, or RP with period n_p."""

    scheme: str
    bits: Optional[int] = None
    n_p: Optional[int] = None

    def __post_init__(self):
        if self.scheme == "vbp":
            if self.bits is None or not (8 <= int(self.bits) <= 24):
                raise ConfigError(f"VBP bits must be in 8..24, got {self.bits}")
            if self.n_p is not None:
                raise ConfigError("VBP config does not take n_p")
        elif self.scheme == "rp":
            n = self.n_p
            if n is None or n < 1 or n > 2**15 or (n & (n - 1)) != 0:
                raise ConfigError(
                    f"RP n_p must be a positive power of two <= 32768, got {n}"
                )
            if self.bits is not None:
                raise ConfigError("RP config does not take bits")
        else:
            raise ConfigError(f"unknown packing scheme {self.scheme!r}")

    @classmethod
    def vbp(cls, bits: int) -> "PackingConfig":
        return cls("vbp", bits=int(bits))

    @classmethod
    def rp(cls, n_p: int) -> "PackingConfig":
        return cls("rp", n_p=int(n_p))

    @property
    def label(self) -> str:
        if self.scheme == "vbp":
            return f"vbp{self.bits}"
        return f"rp{self.n_p}"

    @property
    def parameter(self) -> int:
        """The scheme's single knob: bits for VBP, n_p for RP."""
        return self.bits if self.scheme == "vbp" else self.n_p


def linearize(d, nf: NearFar = DEFAULT_NEAR_FAR):
    """Convert normalized nonlinear depth to view-space distance.

    The buffer convention is inverted: d=1 sits on the near plane and d=0 on
    the far plane, so distance is strictly decreasing in d:

        dist = near * far / (near + d * (far - near))
    """
    d = np.asarray(d, dtype=np.float64)
    out = (nf.near * nf.far) / (nf.near + d * (nf.far - nf.near))
    return float(out) if out.ndim == 0 else out


def subsample_chroma(frame: PackedFrame) -> PackedFrame:
    """Average each 2x2 chroma block (round half up); Y passes through."""
    if frame.chroma_mode is not ChromaMode.FULL444:
        raise DimensionError("subsample_chroma expects a Full444 frame")
    if frame.width % 2 or frame.height % 2:
        raise DimensionError("Sub420 requires even width and height")

    def block_mean(p: np.ndarray) -> np.ndarray:
        s = (
            p[0::2, 0::2].astype(np.uint32)
            + p[0::2, 1::2]
            + p[1::2, 0::2]
            + p[1::2, 1::2]
        )
        return ((s + 2) // 4).astype(np.uint8)

    return PackedFrame(
        frame.width,
        frame.height,
        frame.y_plane,
        block_mean(frame.u_plane),
        block_mean(frame.v_plane),
        ChromaMode.SUB420,
    )


def upsample_chroma(frame: PackedFrame) -> PackedFrame:
    """Replicate each chroma sample to its 2x2 block (nearest neighbor)."""
    if frame.chroma_mode is not ChromaMode.SUB420:
        raise DimensionError("upsample_chroma expects a Sub420 frame")

    def rep(p: np.ndarray) -> np.ndarray:
        return np.repeat(np.repeat(p, 2, axis=0), 2, axis=1)

    return PackedFrame(
        frame.width,
        frame.height,
        frame.y_plane,
        rep(frame.u_plane),
        rep(frame.v_plane),
        ChromaMode.FULL444,
    )
