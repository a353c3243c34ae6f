"""Brute-force per-frame optimal precision search.

Encodes the whole sequence once per candidate precision (so P-frame effects
are real, not per-frame re-encodes), records per-frame errors, and extracts
the argmin precision per frame. This is the ground truth the predictor is
trained against, and the source of its labels.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .channel import ChannelConfig
from .metrics import resolve_workers, run_pipeline
from .types import ConfigError, DepthMap, PackingConfig

_VERSION_COMMENT = "# depthpack 0.1.0"

# eight candidate precisions; the exact published set is not listed anywhere,
# so the span 8..24 with 2-bit steps (and the 24-bit cap) is this package's
# default and is configurable everywhere it is consumed
DEFAULT_PRECISIONS = (8, 10, 12, 14, 16, 18, 20, 24)


@dataclass(frozen=True)
class OracleRecord:
    """Per-frame errors across the precision set and the resulting argmin."""

    frame_index: int
    bitrate: float
    errors_by_precision: Tuple[float, ...]
    best_precision: int
    second_best_gap: float


def make_record(
    frame_index: int,
    bitrate: float,
    errors: Sequence[float],
    precision_set: Sequence[int],
) -> OracleRecord:
    """Build a record from measured errors; ties resolve to the lowest bits."""
    errors = tuple(float(e) for e in errors)
    if len(errors) != len(precision_set):
        raise ConfigError("errors and precision_set lengths differ")
    order = np.argsort(errors, kind="stable")  # stable: ties keep lowest bits
    best_idx = int(order[0])
    gap = errors[int(order[1])] - errors[best_idx] if len(errors) > 1 else 0.0
    return OracleRecord(
        frame_index=frame_index,
        bitrate=float(bitrate),
        errors_by_precision=errors,
        best_precision=int(precision_set[best_idx]),
        second_best_gap=float(gap),
    )


def _precision_errors(args) -> List[float]:
    maps, bits, channel_cfg = args
    reports, _ = run_pipeline(maps, PackingConfig.vbp(bits), channel_cfg)
    return [r.mae for r in reports]


def oracle_labels(
    maps: Sequence[DepthMap],
    bitrate: float,
    precision_set: Sequence[int] = DEFAULT_PRECISIONS,
    cfg: Optional[ChannelConfig] = None,
    workers: int = 1,
) -> List[OracleRecord]:
    """Evaluate every precision over the full sequence; argmin per frame.

    Precisions are independent encoder runs and may execute in a process
    pool; results are ordered by precision regardless of completion order.
    """
    if not maps:
        raise ConfigError("oracle needs a non-empty sequence")
    precision_set = sorted(int(b) for b in set(precision_set))
    if not precision_set or not all(8 <= b <= 24 for b in precision_set):
        raise ConfigError(f"precision_set must lie within 8..24, got {precision_set}")
    base = cfg or ChannelConfig(target_bitrate=bitrate)
    channel_cfg = ChannelConfig(
        target_bitrate=float(bitrate),
        fps=base.fps,
        gop=base.gop,
        chroma_mode=base.chroma_mode,
        qp_min=base.qp_min,
        qp_max=base.qp_max,
    )
    tasks = [(list(maps), bits, channel_cfg) for bits in precision_set]
    n_workers = min(resolve_workers(workers), len(tasks))
    if n_workers <= 1:
        per_precision = [_precision_errors(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            per_precision = list(pool.map(_precision_errors, tasks))
    errors = np.asarray(per_precision)  # [n_precisions, n_frames]
    return [
        make_record(maps[i].frame_index, bitrate, errors[:, i], precision_set)
        for i in range(len(maps))
    ]


def switch_count(records: Sequence[OracleRecord]) -> int:
    """Number of frames whose best precision differs from its predecessor."""
    labels = [r.best_precision for r in records]
    return sum(1 for a, b in zip(labels, labels[1:]) if a != b)


def write_labels_csv(records: Sequence[OracleRecord], precision_set, path) -> None:
    precision_set = sorted(int(b) for b in set(precision_set))
    cols = ["frame_index", "bitrate"]
    cols += [f"err_{b}" for b in precision_set]
    cols += ["best_precision", "second_best_gap"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_VERSION_COMMENT + "\n")
        fh.write(",".join(cols) + "\n")
        for r in records:
            errs = ",".join(f"{e:.12g}" for e in r.errors_by_precision)
            fh.write(
                f"{r.frame_index},{r.bitrate:.6g},{errs},"
                f"{r.best_precision},{r.second_best_gap:.12g}\n"
            )


def read_labels_csv(path) -> Tuple[List[OracleRecord], List[int]]:
    """Inverse of write_labels_csv; returns (records, precision_set)."""
    from .types import DataError

    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    except FileNotFoundError as exc:
        raise DataError(f"label file not found: {path}") from exc
    if not lines:
        raise DataError(f"empty label file {path}")
    header = lines[0].split(",")
    err_cols = [c for c in header if c.startswith("err_")]
    if not err_cols or header[:2] != ["frame_index", "bitrate"]:
        raise DataError(f"unrecognized label file header in {path}")
    precision_set = [int(c[4:]) for c in err_cols]
    records = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(header):
            raise DataError(f"malformed label row in {path}: {ln!r}")
        errors = [float(x) for x in parts[2 : 2 + len(precision_set)]]
        records.append(
            make_record(int(parts[0]), float(parts[1]), errors, precision_set)
        )
    return records, precision_set
