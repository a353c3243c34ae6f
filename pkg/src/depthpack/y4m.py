"""Minimal Y4M (YUV4MPEG2) writer/reader for packed frames.

Supports the two plane layouts this package produces: C444 and C420jpeg
(2x2 block-sited chroma, matching the subsampling filter used here).
"""

from __future__ import annotations

import io
from fractions import Fraction
from typing import List, Sequence, Tuple

import numpy as np

from .types import ChromaMode, DataError, PackedFrame


def _fps_token(fps: float) -> str:
    frac = Fraction(fps).limit_denominator(1000)
    return f"F{frac.numerator}:{frac.denominator}"


def write_y4m(frames: Sequence[PackedFrame], fps: float, path=None) -> bytes:
    """Serialize frames to Y4M; writes to `path` if given, returns the bytes."""
    if not frames:
        raise DataError("no frames to write")
    first = frames[0]
    colorspace = "C444" if first.chroma_mode is ChromaMode.FULL444 else "C420jpeg"
    buf = io.BytesIO()
    buf.write(
        f"YUV4MPEG2 W{first.width} H{first.height} {_fps_token(fps)} "
        f"Ip A1:1 {colorspace}\n".encode("ascii")
    )
    for f in frames:
        if (f.width, f.height, f.chroma_mode) != (
            first.width,
            first.height,
            first.chroma_mode,
        ):
            raise DataError("all Y4M frames must share dimensions and chroma mode")
        buf.write(b"FRAME\n")
        buf.write(f.y_plane.tobytes())
        buf.write(f.u_plane.tobytes())
        buf.write(f.v_plane.tobytes())
    payload = buf.getvalue()
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(payload)
    return payload


def read_y4m(source) -> Tuple[List[PackedFrame], float]:
    """Parse Y4M bytes or a file path into frames plus the frame rate."""
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        try:
            with open(source, "rb") as fh:
                data = fh.read()
        except FileNotFoundError as exc:
            raise DataError(f"Y4M stream not found: {source}") from exc
    nl = data.find(b"\n")
    if nl < 0 or not data.startswith(b"YUV4MPEG2"):
        raise DataError("not a YUV4MPEG2 stream")
    header = data[:nl].decode("ascii", "replace").split()
    width = height = None
    fps = 30.0
    chroma = ChromaMode.SUB420  # Y4M default is 4:2:0
    for token in header[1:]:
        if token.startswith("W"):
            width = int(token[1:])
        elif token.startswith("H"):
            height = int(token[1:])
        elif token.startswith("F"):
            num, den = token[1:].split(":")
            fps = int(num) / int(den)
        elif token.startswith("C"):
            tag = token[1:]
            if tag.startswith("444"):
                chroma = ChromaMode.FULL444
            elif tag.startswith("420"):
                chroma = ChromaMode.SUB420
            else:
                raise DataError(f"unsupported Y4M colorspace C{tag}")
    if width is None or height is None:
        raise DataError("Y4M header missing dimensions")

    luma = width * height
    csize = luma if chroma is ChromaMode.FULL444 else (width // 2) * (height // 2)
    cshape = (
        (height, width) if chroma is ChromaMode.FULL444 else (height // 2, width // 2)
    )
    frames: List[PackedFrame] = []
    pos = nl + 1
    while pos < len(data):
        fnl = data.find(b"\n", pos)
        if fnl < 0 or not data[pos:fnl].startswith(b"FRAME"):
            raise DataError("malformed Y4M frame marker")
        pos = fnl + 1
        end = pos + luma + 2 * csize
        if end > len(data):
            raise DataError("truncated Y4M frame payload")
        y = np.frombuffer(data, np.uint8, luma, pos).reshape(height, width)
        u = np.frombuffer(data, np.uint8, csize, pos + luma).reshape(cshape)
        v = np.frombuffer(data, np.uint8, csize, pos + luma + csize).reshape(cshape)
        frames.append(PackedFrame(width, height, y, u, v, chroma))
        pos = end
    if not frames:
        raise DataError("Y4M stream contains no frames")
    return frames, fps
