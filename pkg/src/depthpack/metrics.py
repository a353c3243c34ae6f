"""Depth-error measurement and packing-vs-codec error decomposition.

Error is mean absolute difference in normalized depth units (the L1 depth
error); view-space distance via linearize is available as an optional extra
but never the primary metric. The decomposition compares three stages of the
pipeline: ground truth, the packed-then-unpacked reference (packing loss
only, including any chroma subsampling), and the channel-decoded result.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .channel import ChannelConfig, achieved_bitrate, encode_sequence
from .packing import pack_frame, unpack_frame
from .types import (
    ChromaMode,
    DepthMap,
    DimensionError,
    NearFar,
    PackingConfig,
    linearize,
)

_VERSION_COMMENT = "# depthpack 0.1.0"

SWEEP_CSV_COLUMNS = (
    "config",
    "bits_or_np",
    "chroma",
    "target_bps",
    "achieved_bps",
    "mae",
    "packing_mae",
    "codec_mae",
    "mae_pooled",
)


@dataclass(frozen=True)
class ErrorReport:
    """Per-frame error split: total, packing-only, codec-added."""

    frame_index: int
    mae: float
    packing_mae: float
    codec_mae: float
    achieved_bits: int = 0
    scene_mae: Optional[float] = None  # view-space units, when requested


def depth_mae(a: DepthMap, b: DepthMap) -> float:
    """Mean absolute depth difference in normalized units."""
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionError(
            f"dimension mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    return float(
        np.mean(np.abs(a.values.astype(np.float64) - b.values.astype(np.float64)))
    )


def scene_unit_mae(a: DepthMap, b: DepthMap, nf: NearFar) -> float:
    """Mean absolute view-space distance difference, in scene units.

    Normalized error is the primary metric; this is the optional
    application-facing view of the same comparison.
    """
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionError(
            f"dimension mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    return float(
        np.mean(
            np.abs(
                linearize(a.values.astype(np.float64), nf)
                - linearize(b.values.astype(np.float64), nf)
            )
        )
    )


def decompose_error(
    gt: DepthMap,
    packed_ref: DepthMap,
    decoded: DepthMap,
    achieved_bits: int = 0,
    scene_nf: Optional[NearFar] = None,
) -> ErrorReport:
    """Split total error into packing and codec components.

    packing_mae = MAE(packed_ref, gt), codec_mae = MAE(decoded, packed_ref),
    mae = MAE(decoded, gt). The components are recomputed from their defining
    pairs; codec error can partially cancel packing error, so no inequality
    between them is assumed.
    """
    return ErrorReport(
        frame_index=gt.frame_index,
        mae=depth_mae(decoded, gt),
        packing_mae=depth_mae(packed_ref, gt),
        codec_mae=depth_mae(decoded, packed_ref),
        achieved_bits=achieved_bits,
        scene_mae=None if scene_nf is None else scene_unit_mae(decoded, gt, scene_nf),
    )


def run_pipeline(
    maps: Sequence[DepthMap],
    packing_cfg: PackingConfig,
    channel_cfg: ChannelConfig,
    scene_nf: Optional[NearFar] = None,
) -> Tuple[List[ErrorReport], float]:
    """Pack, channel-encode, and decode a sequence; report per-frame errors.

    Returns (reports, achieved bits/s). The packing reference shares the
    pack/quantize/chroma path with the codec input so codec_mae isolates the
    encoder's own loss. Passing scene_nf adds view-space error to the reports.
    """
    chroma = channel_cfg.chroma_mode
    packed = [pack_frame(m, packing_cfg, chroma) for m in maps]
    refs = [unpack_frame(p, packing_cfg, m.frame_index) for p, m in zip(packed, maps)]
    coded = encode_sequence(packed, channel_cfg)
    reports = []
    for m, ref, c in zip(maps, refs, coded):
        decoded = unpack_frame(c.reconstruction, packing_cfg, m.frame_index)
        reports.append(
            decompose_error(m, ref, decoded, achieved_bits=c.bit_count,
                            scene_nf=scene_nf)
        )
    return reports, achieved_bitrate(coded, channel_cfg.fps)


@dataclass(frozen=True)
class SweepRow:
    """One cell of the factorial sweep over configs, bitrates, chroma modes."""

    config: str
    bits_or_np: int
    chroma: str
    target_bps: float
    achieved_bps: float
    mae: float
    packing_mae: float
    codec_mae: float
    mae_pooled: float
    scene_mae: Optional[float] = None


def _sweep_cell(args) -> SweepRow:
    maps, cfg, bitrate, chroma, base, scene_nf = args
    channel_cfg = ChannelConfig(
        target_bitrate=bitrate,
        fps=base.fps,
        gop=base.gop,
        chroma_mode=chroma,
        qp_min=base.qp_min,
        qp_max=base.qp_max,
    )
    reports, achieved = run_pipeline(maps, cfg, channel_cfg, scene_nf=scene_nf)
    npix = maps[0].width * maps[0].height
    total_px = npix * len(maps)
    return SweepRow(
        config=cfg.scheme,
        bits_or_np=cfg.parameter,
        chroma=chroma.value,
        target_bps=bitrate,
        achieved_bps=achieved,
        mae=float(np.mean([r.mae for r in reports])),
        packing_mae=float(np.mean([r.packing_mae for r in reports])),
        codec_mae=float(np.mean([r.codec_mae for r in reports])),
        # pooled over all pixels; equals the per-frame mean for equal-size frames
        mae_pooled=float(np.sum([r.mae * npix for r in reports]) / total_px),
        scene_mae=None
        if scene_nf is None
        else float(np.mean([r.scene_mae for r in reports])),
    )


def resolve_workers(workers: Optional[int] = None) -> int:
    """Worker count: explicit argument, then DEPTHPACK_WORKERS, then cores."""
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("DEPTHPACK_WORKERS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def sweep(
    maps: Sequence[DepthMap],
    configs: Sequence[PackingConfig],
    bitrates: Sequence[float],
    chroma_modes: Sequence[ChromaMode] = (ChromaMode.FULL444,),
    base_cfg: Optional[ChannelConfig] = None,
    workers: Optional[int] = None,
    scene_nf: Optional[NearFar] = None,
) -> List[SweepRow]:
    """Full factorial run over (config, bitrate, chroma) cells.

    Cells are independent encoder runs and may execute in a process pool;
    row order is by cell index regardless of completion order.
    """
    base = base_cfg or ChannelConfig(target_bitrate=1.0)
    cells = [
        (list(maps), cfg, float(b), chroma, base, scene_nf)
        for cfg in configs
        for b in bitrates
        for chroma in chroma_modes
    ]
    n_workers = resolve_workers(workers)
    if n_workers <= 1 or len(cells) <= 1:
        return [_sweep_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=min(n_workers, len(cells))) as pool:
        return list(pool.map(_sweep_cell, cells))


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    with_scene = any(r.scene_mae is not None for r in rows)
    columns = SWEEP_CSV_COLUMNS + (("scene_mae",) if with_scene else ())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_VERSION_COMMENT + "\n")
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(
                f"{r.config},{r.bits_or_np},{r.chroma},{r.target_bps:.6g},"
                f"{r.achieved_bps:.6g},{r.mae:.12g},{r.packing_mae:.12g},"
                f"{r.codec_mae:.12g},{r.mae_pooled:.12g}"
            )
            if with_scene:
                fh.write(f",{'' if r.scene_mae is None else f'{r.scene_mae:.12g}'}")
            fh.write("\n")
