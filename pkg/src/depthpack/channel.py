"""Deterministic lossy codec-channel simulator.

Stands in for a hardware H.264 encoder at the contract level: 8x8 block
transform coding of intra (flat prediction) and inter (co-located previous
reconstruction) frames, uniform quantization with an H.264-style step that
doubles every 6 qp, exp-Golomb code-length bit accounting, and CBR rate
control with a one-second GOP by default. No motion estimation: co-located
prediction is enough to reproduce the inter-frame compression behavior that
makes packing precision matter, at a fraction of the complexity.

Everything here is a pure function of its inputs, so encoding the same
sequence twice yields bit-identical results.
"""

from __future__ import annotations

import shlex
import subprocess
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import _kernels
from .types import (
    ChromaMode,
    ConfigError,
    DataError,
    DimensionError,
    PackedFrame,
)
from .y4m import read_y4m, write_y4m

_DEBT_LEAK = 0.9
_VERSION_COMMENT = "# depthpack 0.1.0"


@dataclass(frozen=True)
class ChannelConfig:
    """Encoder knobs: target bitrate, frame rate, GOP, chroma mode, qp range."""

    target_bitrate: float
    fps: float = 30.0
    gop: Optional[int] = None  # default: one-second GOP (= fps)
    chroma_mode: ChromaMode = ChromaMode.FULL444
    qp_min: int = 0
    qp_max: int = 51

    def __post_init__(self):
        if self.target_bitrate <= 0:
            raise ConfigError(f"target_bitrate must be > 0, got {self.target_bitrate}")
        if self.fps <= 0:
            raise ConfigError(f"fps must be > 0, got {self.fps}")
        gop = int(round(self.fps)) if self.gop is None else int(self.gop)
        if gop < 1:
            raise ConfigError(f"gop must be >= 1, got {gop}")
        if not (0 <= self.qp_min <= self.qp_max <= 51):
            raise ConfigError(f"qp range [{self.qp_min}, {self.qp_max}] invalid")
        object.__setattr__(self, "gop", gop)


@dataclass(frozen=True, eq=False)
class CodedFrame:
    """One encoded frame: size estimate, qp, type, and its reconstruction."""

    bit_count: int
    qp_used: int
    frame_type: str  # "I" or "P"
    reconstruction: PackedFrame
    overshoot: bool = False

    def __post_init__(self):
        if self.bit_count <= 0:
            raise DataError("bit_count must be > 0")
        if self.frame_type not in ("I", "P"):
            raise DataError(f"frame_type must be I or P, got {self.frame_type}")


def qp_step(qp: int) -> float:
    """Quantizer step: doubles every 6 qp, clamped to at least 1."""
    return max(1.0, 2.0 ** ((qp - 4) / 6.0))


def _pad8(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    ph = (-h) % _kernels.BLOCK
    pw = (-w) % _kernels.BLOCK
    if ph == 0 and pw == 0:
        return plane
    return np.pad(plane, ((0, ph), (0, pw)), mode="edge")


def encode_frame(
    frame: PackedFrame, prev_recon: Optional[PackedFrame], qp: int
) -> CodedFrame:
    """Encode one frame at a fixed qp (I if prev_recon is None, else P)."""
    if prev_recon is not None:
        if (prev_recon.width, prev_recon.height) != (frame.width, frame.height):
            raise DimensionError("previous reconstruction dimensions do not match")
        if prev_recon.chroma_mode is not frame.chroma_mode:
            raise DimensionError("previous reconstruction chroma mode does not match")
    step = qp_step(qp)
    planes = (frame.y_plane, frame.u_plane, frame.v_plane)
    prev_planes = (
        (None, None, None)
        if prev_recon is None
        else (prev_recon.y_plane, prev_recon.u_plane, prev_recon.v_plane)
    )

    total_bits = 0
    recon_planes = []
    for plane, prev in zip(planes, prev_planes):
        cur = _pad8(plane.astype(np.float64))
        pred = np.full_like(cur, 128.0) if prev is None else _pad8(prev.astype(np.float64))
        bits, recon_res = _kernels.encode_plane(np.ascontiguousarray(cur - pred), step)
        total_bits += bits
        recon = np.clip(np.floor(pred + recon_res + 0.5), 0.0, 255.0).astype(np.uint8)
        recon_planes.append(recon[: plane.shape[0], : plane.shape[1]])

    return CodedFrame(
        bit_count=total_bits,
        qp_used=int(qp),
        frame_type="I" if prev_recon is None else "P",
        reconstruction=PackedFrame(
            frame.width,
            frame.height,
            recon_planes[0],
            recon_planes[1],
            recon_planes[2],
            frame.chroma_mode,
        ),
    )


@dataclass
class RateControlState:
    """Mutable per-sequence rate-control bookkeeping."""

    frame_index: int = 0
    debt: float = 0.0


def _frame_weights(gop: int):
    # I-frames get up to 3x the nominal frame budget, P-frames the remainder
    w_i = min(3.0, max(1.0, gop / 2.0))
    w_p = (gop - w_i) / (gop - 1) if gop > 1 else 1.0
    return w_i, w_p


def rate_control(
    frame: PackedFrame,
    prev_recon: Optional[PackedFrame],
    cfg: ChannelConfig,
    state: RateControlState,
) -> CodedFrame:
    """Encode one frame, choosing qp to fill the per-frame bit budget.

    Binary search exploits bit_count being non-increasing in qp: it picks the
    smallest qp whose cost fits the budget, i.e. the largest spend <= budget.
    Over/under-spend accumulates into a leaky debt (clamped to +-2 nominal
    frame budgets) credited to later frames; the debt resets at GOP starts.
    If even qp_max cannot fit the budget the frame is emitted anyway with the
    overshoot flag set.
    """
    base = cfg.target_bitrate / cfg.fps
    is_intra = prev_recon is None or state.frame_index % cfg.gop == 0
    if state.frame_index % cfg.gop == 0:
        state.debt = 0.0
    w_i, w_p = _frame_weights(cfg.gop)
    nominal = base * (w_i if is_intra else w_p)
    budget = max(1.0, nominal + float(np.clip(state.debt, -2.0 * base, 2.0 * base)))
    prev = None if is_intra else prev_recon

    lo, hi = cfg.qp_min, cfg.qp_max
    coded_lo = encode_frame(frame, prev, lo)
    if coded_lo.bit_count <= budget:
        chosen = coded_lo
    else:
        chosen = encode_frame(frame, prev, hi)
        if chosen.bit_count <= budget:
            # smallest qp in (lo, hi] whose cost fits
            best = chosen
            lo_n, hi_n = lo + 1, hi
            while lo_n < hi_n:
                mid = (lo_n + hi_n) // 2
                coded_mid = encode_frame(frame, prev, mid)
                if coded_mid.bit_count <= budget:
                    best = coded_mid
                    hi_n = mid
                else:
                    lo_n = mid + 1
            chosen = best
    if chosen.bit_count > budget:
        chosen = CodedFrame(
            chosen.bit_count,
            chosen.qp_used,
            chosen.frame_type,
            chosen.reconstruction,
            overshoot=True,
        )

    state.debt = _DEBT_LEAK * (state.debt + (nominal - chosen.bit_count))
    state.frame_index += 1
    return chosen


def encode_sequence(
    frames: Sequence[PackedFrame], cfg: ChannelConfig
) -> List[CodedFrame]:
    """Rate-controlled encode of a frame sequence with periodic I-frames."""
    if not frames:
        raise ConfigError("cannot encode an empty sequence")
    first = frames[0]
    for f in frames:
        if (f.width, f.height, f.chroma_mode) != (
            first.width,
            first.height,
            first.chroma_mode,
        ):
            raise DimensionError("all frames must share dimensions and chroma mode")

    state = RateControlState()
    coded: List[CodedFrame] = []
    prev: Optional[PackedFrame] = None
    for idx, frame in enumerate(frames):
        is_intra = idx % cfg.gop == 0
        out = rate_control(frame, None if is_intra else prev, cfg, state)
        coded.append(out)
        prev = out.reconstruction
    return coded


def achieved_bitrate(coded: Sequence[CodedFrame], fps: float) -> float:
    """Mean bits per second actually spent by an encoded sequence."""
    if not coded:
        return 0.0
    return sum(c.bit_count for c in coded) * fps / len(coded)


def write_coded_csv(coded: Sequence[CodedFrame], path) -> None:
    """Dump per-frame coded sizes: frame_index, type, qp, bits."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_VERSION_COMMENT + "\n")
        fh.write("frame_index,type,qp,bits\n")
        for i, c in enumerate(coded):
            fh.write(f"{i},{c.frame_type},{c.qp_used},{c.bit_count}\n")


def external_encode(
    frames: Sequence[PackedFrame],
    cfg: ChannelConfig,
    encoder_command,
    decoder_command=None,
) -> List[CodedFrame]:
    """Escape hatch to a real codec via Y4M pipes. Outside core acceptance.

    encoder_command reads Y4M on stdin and writes a stream to stdout; if
    decoder_command is given it must turn that stream back into Y4M,
    otherwise the encoder output itself is parsed as Y4M (a "null codec"
    such as plain cat). Real bitstreams carry no per-frame sizes, so the
    total compressed size is attributed uniformly across frames.
    """
    if not frames:
        raise ConfigError("cannot encode an empty sequence")

    def run(cmd, payload: bytes) -> bytes:
        argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        try:
            proc = subprocess.run(
                argv, input=payload, stdout=subprocess.PIPE, stderr=subprocess.PIPE
            )
        except FileNotFoundError as exc:
            raise DataError(f"external codec command not found: {argv[0]}") from exc
        if proc.returncode != 0:
            tail = proc.stderr.decode("utf-8", "replace")[-500:]
            raise DataError(
                f"external codec command failed (exit {proc.returncode}): {tail}"
            )
        return proc.stdout

    compressed = run(encoder_command, write_y4m(frames, cfg.fps))
    stream = run(decoder_command, compressed) if decoder_command else compressed
    try:
        decoded, _ = read_y4m(stream)
    except DataError as exc:
        raise DataError(f"could not parse decoded stream as Y4M: {exc}") from exc
    if len(decoded) != len(frames):
        raise DataError(
            f"decoded frame count {len(decoded)} != input count {len(frames)}"
        )
    per_frame_bits = max(1, (len(compressed) * 8 + len(frames) - 1) // len(frames))
    return [
        CodedFrame(
            bit_count=per_frame_bits,
            qp_used=-1,
            frame_type="I" if i == 0 else "P",
            reconstruction=rec,
        )
        for i, rec in enumerate(decoded)
    ]
