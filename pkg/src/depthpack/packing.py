"""Depth-to-YUV packing schemes and their exact inverses.

Two schemes are implemented:

* Variable bit packing (VBP): base-255 fractional decomposition of the depth
  float into up to three channel bytes, with parity-driven inversion of the
  lower channels so that a depth ramp produces continuous triangle waves
  instead of sawtooth discontinuities, and a precision knob (8..24 bits) that
  rescales the surviving low channels.
* Robust packing (RP): an 8-bit coarse depth in Y plus two triangle waves in
  the chroma channels with the same period n_p but quarter-period phase
  offset, decoded jointly so the fine phase survives channel quantization.

Per-pixel functions take and return plain floats; frame-level functions are
vectorized over numpy arrays and apply the global round-half-up quantizer.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .types import (
    ChromaMode,
    ConfigError,
    DepthMap,
    PackedFrame,
    PackingConfig,
    quantize8,
    subsample_chroma,
    upsample_chroma,
)


class ChannelTriple(NamedTuple):
    """Pre-quantization channel values for one pixel, each in [0, 1]."""

    y: float
    u: float
    v: float


# the period range swept in experiments; any power of two <= 2^15 is accepted
DEFAULT_RP_PERIODS = (512, 1024, 2048, 4096, 8192)


def _check_bits(bits: int) -> int:
    bits = int(bits)
    if not 8 <= bits <= 24:
        raise ConfigError(f"VBP bits must be in 8..24, got {bits}")
    return bits


def _check_np(n_p: int) -> int:
    n_p = int(n_p)
    if n_p < 1 or n_p > 2**15 or (n_p & (n_p - 1)) != 0:
        raise ConfigError(f"RP n_p must be a positive power of two <= 32768, got {n_p}")
    return n_p


# ---------------------------------------------------------------------------
# Variable bit packing
# ---------------------------------------------------------------------------

def _vbp_pack_arrays(d: np.ndarray, bits: int):
    """Vectorized VBP: returns pre-quantization (y, u, v) float planes.

    The base-255 decomposition with carry correction reduces to byte values
    b0 = floor(255 d), b1 = floor(255 frac(255 d)), b2 = floor(255 frac(65025 d)),
    each stored as b/255. U is inverted when the Y byte is odd; V is inverted
    when the stored (post-inversion) U byte is odd. Keying V on the stored
    byte makes both waves continuous across every digit wrap, including Y
    boundaries where the raw U digit also wraps; that continuity is the whole
    point of the inversions.
    """
    d = np.asarray(d, dtype=np.float64)
    dm = d * 255.0
    b0 = np.floor(dm)
    t1 = (dm - b0) * 255.0
    b1 = np.floor(t1)
    b2 = np.floor((t1 - b1) * 255.0)

    u_bytes = np.where(b0 % 2.0 == 1.0, 255.0 - b1, b1)
    v_bytes = np.where(u_bytes % 2.0 == 1.0, 255.0 - b2, b2)
    y = b0 / 255.0
    u = u_bytes / 255.0
    v = v_bytes / 255.0

    # precision reduction: squeeze survivors into the channel's low range
    if bits == 8:
        u = np.zeros_like(u)
    elif bits < 16:
        u = u * 2.0 ** (bits - 16)
    if bits <= 16:
        v = np.zeros_like(v)
    else:
        v = v * 2.0 ** (bits - 24)

    sentinel = d == 1.0
    y = np.where(sentinel, 1.0, y)
    u = np.where(sentinel, 1.0, u)
    v = np.where(sentinel, 1.0, v)
    return y, u, v


def _vbp_unpack_arrays(y, u, v, bits: int) -> np.ndarray:
    """Vectorized VBP inverse on channel values in [0, 1]."""
    y = np.asarray(y, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    sentinel = (y == 1.0) & (u == 1.0) & (v == 1.0)

    if bits == 8:
        d = y
    else:
        if bits < 16:
            u = np.minimum(u * 2.0 ** (16 - bits), 1.0)
        b0 = np.floor(y * 255.0 + 0.5)
        if bits <= 16:
            u = np.where(b0 % 2.0 == 1.0, 1.0 - u, u)
            d = y + u / 255.0
        else:
            # V's inversion is keyed on the stored U byte, read before U
            # itself is un-inverted
            stored_u = np.floor(u * 255.0 + 0.5)
            v = np.minimum(v * 2.0 ** (24 - bits), 1.0)
            v = np.where(stored_u % 2.0 == 1.0, 1.0 - v, v)
            u = np.where(b0 % 2.0 == 1.0, 1.0 - u, u)
            d = y + u / 255.0 + v / 65025.0

    d = np.where(sentinel, 1.0, d)
    return np.clip(d, 0.0, 1.0)


def vbp_pack(d: float, bits: int) -> ChannelTriple:
    """Pack one normalized depth value at the requested precision."""
    bits = _check_bits(bits)
    if not 0.0 <= d <= 1.0:
        raise ConfigError(f"depth must be in [0, 1], got {d}")
    y, u, v = _vbp_pack_arrays(np.float64(d), bits)
    return ChannelTriple(float(y), float(u), float(v))


def vbp_unpack(c: ChannelTriple, bits: int) -> float:
    """Invert vbp_pack; result is clamped to [0, 1]."""
    bits = _check_bits(bits)
    return float(_vbp_unpack_arrays(c[0], c[1], c[2], bits))


# ---------------------------------------------------------------------------
# Robust packing
# ---------------------------------------------------------------------------

def _triangle(phase, n_p: int):
    """Triangle wave in [0, 1] with period n_p over the 16-bit code line."""
    h = (np.asarray(phase, dtype=np.float64) % n_p) / (n_p / 2.0)
    return np.where(h > 1.0, 2.0 - h, h)


def _rp_pack_arrays(d16, n_p: int):
    d = np.asarray(d16, dtype=np.float64)
    y = (d + 0.5) / 65536.0
    u = _triangle(d, n_p)
    v = _triangle((d - n_p / 4.0) % 65536.0, n_p)
    return y, u, v


def _rp_unpack_arrays(y, u, v, n_p: int) -> np.ndarray:
    """Vectorized RP inverse.

    The two quarter-period-shifted triangle waves trace a diamond in the
    (U, V) plane, so the phase within one period is recovered from the pair
    alone; each diamond side gives two linear estimates which are averaged.
    The coarse Y channel only selects the period index, which tolerates
    coarse noise up to half a period.
    """
    p = float(n_p)
    d_hat = np.asarray(y, dtype=np.float64) * 65536.0 - 0.5
    ha = np.asarray(u, dtype=np.float64)
    hb = np.asarray(v, dtype=np.float64)

    lo_a = ha <= 0.5
    lo_b = hb <= 0.5
    phi = np.where(
        lo_a & lo_b,
        (ha - hb + 0.5) * (p / 4.0),
        np.where(
            ~lo_a & lo_b,
            (ha + hb + 0.5) * (p / 4.0),
            np.where(
                ~lo_a & ~lo_b,
                (2.5 - ha + hb) * (p / 4.0),
                (4.5 - ha - hb) * (p / 4.0),
            ),
        ),
    )
    period = np.floor((d_hat - phi) / p + 0.5)
    d = np.floor(period * p + phi + 0.5)
    return np.clip(d, 0.0, 65535.0).astype(np.int64)


def rp_pack(d16: int, n_p: int) -> ChannelTriple:
    """Pack one 16-bit depth code into coarse Y plus phased triangle waves."""
    n_p = _check_np(n_p)
    d16 = int(d16)
    if not 0 <= d16 < 65536:
        raise ConfigError(f"d16 must be in [0, 65536), got {d16}")
    y, u, v = _rp_pack_arrays(d16, n_p)
    return ChannelTriple(float(y), float(u), float(v))


def rp_unpack(c: ChannelTriple, n_p: int) -> int:
    """Invert rp_pack; always returns the nearest consistent depth code."""
    n_p = _check_np(n_p)
    return int(_rp_unpack_arrays(c[0], c[1], c[2], n_p))


# ---------------------------------------------------------------------------
# Frame-level packing
# ---------------------------------------------------------------------------

def pack_frame(
    dmap: DepthMap, cfg: PackingConfig, chroma: ChromaMode = ChromaMode.FULL444
) -> PackedFrame:
    """Pack a depth map into an 8-bit YUV frame.

    Channels are quantized with the global round-half-up rule; for RP the
    depth is first quantized to d16 = round(d * 65535). Chroma subsampling,
    when requested, happens after quantization, as in the encode pipeline.
    """
    values = dmap.values.astype(np.float64)
    if cfg.scheme == "vbp":
        y, u, v = _vbp_pack_arrays(values, cfg.bits)
    else:
        d16 = np.floor(values * 65535.0 + 0.5)
        y, u, v = _rp_pack_arrays(d16, cfg.n_p)
    frame = PackedFrame(
        dmap.width, dmap.height, quantize8(y), quantize8(u), quantize8(v)
    )
    if chroma is ChromaMode.SUB420:
        frame = subsample_chroma(frame)
    return frame


def unpack_frame(
    frame: PackedFrame, cfg: PackingConfig, frame_index: int = 0
) -> DepthMap:
    """Invert pack_frame; output values are clamped to [0, 1]."""
    if frame.chroma_mode is ChromaMode.SUB420:
        frame = upsample_chroma(frame)
    y = frame.y_plane.astype(np.float64) / 255.0
    u = frame.u_plane.astype(np.float64) / 255.0
    v = frame.v_plane.astype(np.float64) / 255.0
    if cfg.scheme == "vbp":
        d = _vbp_unpack_arrays(y, u, v, cfg.bits)
    else:
        d16 = _rp_unpack_arrays(y, u, v, cfg.n_p)
        d = d16.astype(np.float64) / 65535.0
    return DepthMap(
        frame.width, frame.height, np.clip(d, 0.0, 1.0).astype(np.float32), frame_index
    )
