"""depthpack: depth-map packing for 8-bit video codecs.

Packs floating-point depth maps into three 8-bit channels at variable
precision, pushes them through a deterministic bitrate-constrained codec
channel, measures the resulting depth error, and selects the error-minimizing
precision either by brute force or with a trained lightweight predictor.
"""

__version__ = "0.1.0"

from .channel import (
    ChannelConfig,
    CodedFrame,
    achieved_bitrate,
    encode_frame,
    encode_sequence,
    external_encode,
    rate_control,
    RateControlState,
)
from .metrics import (
    ErrorReport,
    decompose_error,
    depth_mae,
    run_pipeline,
    scene_unit_mae,
    sweep,
)
from .oracle import DEFAULT_PRECISIONS, OracleRecord, oracle_labels, switch_count
from .packing import (
    ChannelTriple,
    DEFAULT_RP_PERIODS,
    pack_frame,
    rp_pack,
    rp_unpack,
    unpack_frame,
    vbp_pack,
    vbp_unpack,
)
from .predictor import (
    FeatureVector,
    RegressorModel,
    baseline_policy,
    extract_features,
    forward,
    select_precision,
    train,
)
from .types import (
    CameraState,
    ChromaMode,
    ConfigError,
    DataError,
    DepthMap,
    DepthPackError,
    DimensionError,
    NearFar,
    PackedFrame,
    PackingConfig,
    TrajectoryError,
    linearize,
    quantize8,
    subsample_chroma,
    upsample_chroma,
)
