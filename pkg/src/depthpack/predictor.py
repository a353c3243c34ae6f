"""Lightweight multi-output regressor predicting per-precision depth error.

Plays the role of a heavyweight CNN backbone at desk scale while keeping the
same input/output contract: summary features of a depth map plus the target
bitrate and camera velocities go in, one predicted error per candidate
precision comes out, and the chosen precision is the argmin. Training
minimizes mean L1 loss with mini-batch adaptive-moment gradient descent
(lr 0.001, batch 10 by default) and an 80/20 train/test split; the
subgradient at the L1 kink and at the rectifier kink is 0.

Every feature is a deterministic function of its inputs, so extraction is
invariant to pixel iteration order and training is bit-reproducible for a
fixed seed on one platform.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .oracle import OracleRecord
from .types import CameraState, ConfigError, DataError, DepthMap, TrajectoryError

FEATURE_VERSION = 1
MODEL_FORMAT_VERSION = 1
HIST_BINS = 16
EDGE_THRESHOLD = 0.02

FEATURE_NAMES = (
    ("mean_depth", "depth_variance", "mean_gradient_magnitude", "edge_density")
    + tuple(f"hist_{i:02d}" for i in range(HIST_BINS))
    + ("temporal_mad", "log2_bitrate", "camera_velocity", "camera_angular_velocity")
)
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class FeatureVector:
    mean_depth: float
    depth_variance: float
    mean_gradient_magnitude: float
    edge_density: float
    histogram: Tuple[float, ...]
    temporal_mad: float
    log2_bitrate: float
    camera_velocity: float
    camera_angular_velocity: float

    def __post_init__(self):
        if len(self.histogram) != HIST_BINS:
            raise ConfigError(f"histogram must have {HIST_BINS} bins")
        arr = self.as_array()
        if not np.all(np.isfinite(arr)):
            raise DataError("feature vector must be finite")
        if abs(sum(self.histogram) - 1.0) > 1e-6:
            raise DataError("histogram must sum to 1")

    def as_array(self) -> np.ndarray:
        return np.array(
            (
                self.mean_depth,
                self.depth_variance,
                self.mean_gradient_magnitude,
                self.edge_density,
            )
            + tuple(self.histogram)
            + (
                self.temporal_mad,
                self.log2_bitrate,
                self.camera_velocity,
                self.camera_angular_velocity,
            ),
            dtype=np.float64,
        )


def camera_velocities(
    prev: CameraState, cur: CameraState
) -> Tuple[float, float]:
    """Linear speed and quaternion-geodesic angular speed between two poses."""
    dt = cur.timestamp - prev.timestamp
    if dt <= 0:
        raise TrajectoryError(f"non-positive camera time step {dt}")
    vel = float(np.linalg.norm(cur.position - prev.position)) / dt
    dot = abs(float(prev.orientation @ cur.orientation))
    ang = 2.0 * math.acos(min(1.0, dot)) / dt
    return vel, ang


def extract_features(
    dmap: DepthMap,
    prev: Optional[DepthMap] = None,
    cam_pair: Optional[Tuple[CameraState, CameraState]] = None,
    bitrate: float = 1e6,
) -> FeatureVector:
    """Summarize a depth map (plus motion context) into the model's inputs."""
    if bitrate <= 0:
        raise ConfigError(f"bitrate must be > 0, got {bitrate}")
    # stay in float32 (the map's native dtype) with float64 accumulators;
    # the copies otherwise dominate single-inference latency on large maps
    v = dmap.values
    mean = float(v.mean(dtype=np.float64))
    var = float(v.var(dtype=np.float64))

    if dmap.width > 1 and dmap.height > 1:
        core = v[:-1, :-1]
        gx = v[:-1, 1:] - core
        gy = v[1:, :-1] - core
        np.multiply(gx, gx, out=gx)
        np.multiply(gy, gy, out=gy)
        gx += gy
        mag = np.sqrt(gx, out=gx)
        grad = float(mag.mean(dtype=np.float64))
        edges = float((mag > EDGE_THRESHOLD).mean(dtype=np.float64))
    else:
        grad = 0.0
        edges = 0.0

    bins = np.bincount(
        np.clip((v * HIST_BINS).astype(np.int32), 0, HIST_BINS - 1).ravel(),
        minlength=HIST_BINS,
    )
    hist = tuple((bins / v.size).tolist())

    tmad = 0.0
    if prev is not None:
        if (prev.width, prev.height) != (dmap.width, dmap.height):
            raise DataError("previous depth map dimensions do not match")
        tmad = float(np.abs(v - prev.values).mean(dtype=np.float64))

    vel = ang = 0.0
    if cam_pair is not None:
        vel, ang = camera_velocities(cam_pair[0], cam_pair[1])

    return FeatureVector(
        mean_depth=mean,
        depth_variance=var,
        mean_gradient_magnitude=grad,
        edge_density=edges,
        histogram=hist,
        temporal_mad=tmad,
        log2_bitrate=math.log2(bitrate),
        camera_velocity=vel,
        camera_angular_velocity=ang,
    )


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class RegressorModel:
    """Two-hidden-layer rectifier network with z-scored inputs."""

    weights: List[np.ndarray]  # W1 (F,64), W2 (64,64), W3 (64,P)
    biases: List[np.ndarray]
    feature_mean: np.ndarray
    feature_std: np.ndarray
    precision_set: Tuple[int, ...]
    feature_version: int = FEATURE_VERSION

    @property
    def n_outputs(self) -> int:
        return self.weights[-1].shape[1]


def init_model(
    precision_set: Sequence[int],
    n_features: int = N_FEATURES,
    hidden: Tuple[int, int] = (64, 64),
    seed: int = 0,
) -> RegressorModel:
    rng = np.random.default_rng(seed)
    dims = [n_features, hidden[0], hidden[1], len(precision_set)]
    weights, biases = [], []
    for d_in, d_out in zip(dims, dims[1:]):
        weights.append(rng.standard_normal((d_in, d_out)) * math.sqrt(2.0 / d_in))
        biases.append(np.zeros(d_out))
    return RegressorModel(
        weights=weights,
        biases=biases,
        feature_mean=np.zeros(n_features),
        feature_std=np.ones(n_features),
        precision_set=tuple(int(b) for b in precision_set),
    )


def _forward_batch(model: RegressorModel, x: np.ndarray):
    xn = (x - model.feature_mean) / model.feature_std
    z1 = xn @ model.weights[0] + model.biases[0]
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ model.weights[1] + model.biases[1]
    h2 = np.maximum(z2, 0.0)
    out = h2 @ model.weights[2] + model.biases[2]
    return out, (xn, z1, h1, z2, h2)


def forward(model: RegressorModel, x) -> np.ndarray:
    """Predicted error per precision for one feature vector."""
    if isinstance(x, FeatureVector):
        x = x.as_array()
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.weights[0].shape[0],):
        raise ConfigError(
            f"feature dimension {x.shape} != ({model.weights[0].shape[0]},)"
        )
    out, _ = _forward_batch(model, x.reshape(1, -1))
    return out[0]


def l1_loss_and_grads(model: RegressorModel, x: np.ndarray, y: np.ndarray):
    """Mean |prediction - label| over the batch and outputs, with gradients."""
    out, (xn, z1, h1, z2, h2) = _forward_batch(model, x)
    diff = out - y
    loss = float(np.abs(diff).mean())
    d_out = np.sign(diff) / diff.size  # subgradient 0 exactly at the kink
    g_w3 = h2.T @ d_out
    g_b3 = d_out.sum(axis=0)
    d_h2 = (d_out @ model.weights[2].T) * (z2 > 0.0)
    g_w2 = h1.T @ d_h2
    g_b2 = d_h2.sum(axis=0)
    d_h1 = (d_h2 @ model.weights[1].T) * (z1 > 0.0)
    g_w1 = xn.T @ d_h1
    g_b1 = d_h1.sum(axis=0)
    return loss, [g_w1, g_w2, g_w3], [g_b1, g_b2, g_b3]


class DivergenceError(DataError):
    """Training loss became non-finite; carries the last finite model."""

    def __init__(self, message, last_model=None):
        super().__init__(message)
        self.last_model = last_model


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 10
    epochs: int = 200
    seed: int = 0
    test_fraction: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden: Tuple[int, int] = (64, 64)
    # L1's sign gradients keep bouncing at constant lr; decay settles them
    lr_decay_factor: float = 0.5
    lr_decay_every: int = 50


@dataclass(eq=False)
class TrainResult:
    model: RegressorModel
    history: List[Tuple[int, float, float]]  # (epoch, train_l1, test_l1)
    train_indices: np.ndarray
    test_indices: np.ndarray


def _clone(model: RegressorModel) -> RegressorModel:
    return RegressorModel(
        [w.copy() for w in model.weights],
        [b.copy() for b in model.biases],
        model.feature_mean.copy(),
        model.feature_std.copy(),
        model.precision_set,
        model.feature_version,
    )


def train(
    features: np.ndarray,
    labels: np.ndarray,
    precision_set: Sequence[int],
    cfg: TrainConfig = TrainConfig(),
    groups: Optional[Sequence[int]] = None,
) -> TrainResult:
    """Fit the regressor on (feature, errors-by-precision) pairs.

    Shuffles with the config seed, holds out test_fraction, fits feature
    normalization on the training split only, and runs Adam-style updates on
    the mean L1 loss. When `groups` marks rows from multiple source datasets,
    each group contributes an equal number of training samples.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise ConfigError("features and labels must be matching non-empty 2-d arrays")
    if y.shape[1] != len(precision_set):
        raise ConfigError("label width must equal the precision set size")

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(x.shape[0])
    n_test = int(round(cfg.test_fraction * x.shape[0]))
    n_test = min(max(n_test, 0), x.shape[0] - 1)
    test_idx = order[:n_test]
    train_idx = order[n_test:]

    if groups is not None:
        g = np.asarray(groups)
        per_group = [train_idx[g[train_idx] == gid] for gid in np.unique(g)]
        quota = min(len(p) for p in per_group)
        if quota == 0:
            raise ConfigError("every group needs at least one training sample")
        train_idx = np.concatenate([p[:quota] for p in per_group])

    x_tr, y_tr = x[train_idx], y[train_idx]
    x_te, y_te = x[test_idx], y[test_idx]

    model = init_model(precision_set, x.shape[1], cfg.hidden, seed=cfg.seed)
    model.feature_mean = x_tr.mean(axis=0)
    model.feature_std = np.maximum(x_tr.std(axis=0), 1e-8)

    params = model.weights + model.biases
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]
    t = 0
    history: List[Tuple[int, float, float]] = []
    last_ok = _clone(model)

    n = x_tr.shape[0]
    for epoch in range(cfg.epochs):
        lr = cfg.lr * cfg.lr_decay_factor ** (epoch // max(1, cfg.lr_decay_every))
        perm = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            loss, g_w, g_b = l1_loss_and_grads(model, x_tr[batch], y_tr[batch])
            if not math.isfinite(loss):
                raise DivergenceError(
                    f"training loss became non-finite at epoch {epoch}",
                    last_model=last_ok,
                )
            epoch_loss += loss
            n_batches += 1
            t += 1
            grads = g_w + g_b
            for p, g, ms, vs in zip(params, grads, m_state, v_state):
                ms *= cfg.beta1
                ms += (1 - cfg.beta1) * g
                vs *= cfg.beta2
                vs += (1 - cfg.beta2) * g * g
                m_hat = ms / (1 - cfg.beta1**t)
                v_hat = vs / (1 - cfg.beta2**t)
                p -= lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        last_ok = _clone(model)
        train_l1 = epoch_loss / max(1, n_batches)
        if len(test_idx):
            out_te, _ = _forward_batch(model, x_te)
            test_l1 = float(np.abs(out_te - y_te).mean())
        else:
            test_l1 = float("nan")
        history.append((epoch, train_l1, test_l1))

    return TrainResult(model, history, train_idx, test_idx)


def select_precision(model: RegressorModel, x) -> int:
    """Precision whose predicted error is lowest; ties pick the lowest bits."""
    out = forward(model, x)
    return int(model.precision_set[int(np.argmin(out))])


def baseline_policy(
    bitrate: float, threshold: float = 50e6, low_bits: int = 12, high_bits: int = 14
) -> int:
    """Fixed-per-bitrate policy: low_bits below the threshold, else high_bits."""
    return low_bits if bitrate < threshold else high_bits


def policy_metrics(
    records: Sequence[OracleRecord],
    chosen_bits: Sequence[int],
    precision_set: Sequence[int],
) -> Tuple[float, float]:
    """(fraction of optimal choices, mean achieved error) for a policy."""
    precision_set = list(precision_set)
    hits = 0
    total_err = 0.0
    for rec, bits in zip(records, chosen_bits):
        hits += int(bits == rec.best_precision)
        total_err += rec.errors_by_precision[precision_set.index(bits)]
    n = len(records)
    return hits / n, total_err / n


# ---------------------------------------------------------------------------
# Model file format (versioned JSON; floats survive exactly via repr)
# ---------------------------------------------------------------------------

def save_model(model: RegressorModel, path) -> None:
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "feature_version": model.feature_version,
        "feature_names": list(FEATURE_NAMES),
        "precision_set": list(model.precision_set),
        "feature_mean": model.feature_mean.tolist(),
        "feature_std": model.feature_std.tolist(),
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_model(path) -> RegressorModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"model file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed model file {path}: {exc}") from exc
    if payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise ConfigError(
            f"unsupported model format version {payload.get('format_version')!r}"
        )
    if payload.get("feature_version") != FEATURE_VERSION:
        raise ConfigError(
            f"model feature version {payload.get('feature_version')!r} does not "
            f"match this package's feature version {FEATURE_VERSION}"
        )
    return RegressorModel(
        weights=[np.asarray(w, dtype=np.float64) for w in payload["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in payload["biases"]],
        feature_mean=np.asarray(payload["feature_mean"], dtype=np.float64),
        feature_std=np.asarray(payload["feature_std"], dtype=np.float64),
        precision_set=tuple(payload["precision_set"]),
        feature_version=payload["feature_version"],
    )


def assemble_dataset(
    maps: Sequence[DepthMap],
    cams: Optional[Sequence[CameraState]],
    records: Sequence[OracleRecord],
) -> Tuple[np.ndarray, np.ndarray]:
    """Build (features, labels) arrays from oracle records over a sequence.

    Each record contributes one row; the row's depth map is looked up by the
    record's frame_index, with the preceding frame and camera pair supplying
    the temporal features.
    """
    by_index = {m.frame_index: i for i, m in enumerate(maps)}
    rows = []
    labels = []
    for rec in records:
        if rec.frame_index not in by_index:
            raise DataError(f"label references unknown frame {rec.frame_index}")
        i = by_index[rec.frame_index]
        prev = maps[i - 1] if i > 0 else None
        cam_pair = None
        if cams is not None and i > 0:
            cam_pair = (cams[i - 1], cams[i])
        fv = extract_features(maps[i], prev, cam_pair, bitrate=rec.bitrate)
        rows.append(fv.as_array())
        labels.append(rec.errors_by_precision)
    return np.asarray(rows), np.asarray(labels)


def write_training_log(history, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# depthpack 0.1.0\n")
        fh.write("epoch,train_l1,test_l1\n")
        for epoch, tr, te in history:
            fh.write(f"{epoch},{tr:.12g},{te:.12g}\n")
