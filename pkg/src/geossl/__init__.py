"""Self-supervised representation learning for geo-located temporal imagery.

Momentum-contrast pretraining with a negative-sample queue, optionally
extended with a temporal positive pair (two views of the same area) and a
location-cluster classification head, plus frozen-probe and finetune
evaluation with per-area temporal aggregation.
"""

from .data import (
    AreaRecord,
    AugmentConfig,
    DatasetManifest,
    GeoSample,
    SyntheticSpec,
    augment,
    generate_synthetic,
    load_manifest,
    sample_temporal_pair,
    split_manifest,
    validate_manifest,
    write_manifest,
)
from .errors import (
    ConfigurationError,
    GeoSSLError,
    ManifestParseError,
    NumericError,
    ValidationError,
)
from .evaluate import (
    EvalReport,
    FinetuneConfig,
    LinearProbe,
    ProbeConfig,
    classify_temporal,
    compute_metrics,
    evaluate_probe,
    extract_features,
    finetune,
    predict_with_head,
    train_linear_probe,
)
from .geocluster import (
    GeoClusterModel,
    assign,
    assign_many,
    cluster_stats,
    fit_kmeans,
    fit_kmeans_restarts,
)
from .loss import (
    LossBatch,
    LossConfig,
    combined_loss,
    geo_cross_entropy,
    info_nce,
    loss_gradients,
)
from .model import (
    EncoderConfig,
    EncoderParams,
    GeoHeadParams,
    MoCoState,
    encode,
    backbone_features,
    geo_logits,
    init_encoder_params,
    init_head,
    momentum_update,
)
from .negqueue import NegativeQueue
from .rng import STREAMS, stream_rng
from .trainer import (
    Checkpoint,
    TrainConfig,
    TraceRow,
    build_initial_state,
    learning_rate,
    load_checkpoint,
    pretrain,
    save_checkpoint,
    sgd_step,
)

__version__ = "0.1.0"

__all__ = [
    "AreaRecord",
    "AugmentConfig",
    "Checkpoint",
    "ConfigurationError",
    "DatasetManifest",
    "EncoderConfig",
    "EncoderParams",
    "EvalReport",
    "FinetuneConfig",
    "GeoClusterModel",
    "GeoHeadParams",
    "GeoSSLError",
    "GeoSample",
    "LinearProbe",
    "LossBatch",
    "LossConfig",
    "ManifestParseError",
    "MoCoState",
    "NegativeQueue",
    "NumericError",
    "ProbeConfig",
    "STREAMS",
    "SyntheticSpec",
    "TraceRow",
    "TrainConfig",
    "ValidationError",
    "assign",
    "assign_many",
    "augment",
    "backbone_features",
    "build_initial_state",
    "classify_temporal",
    "cluster_stats",
    "combined_loss",
    "compute_metrics",
    "encode",
    "evaluate_probe",
    "extract_features",
    "finetune",
    "fit_kmeans",
    "fit_kmeans_restarts",
    "generate_synthetic",
    "geo_cross_entropy",
    "geo_logits",
    "info_nce",
    "init_encoder_params",
    "init_head",
    "learning_rate",
    "load_checkpoint",
    "load_manifest",
    "loss_gradients",
    "momentum_update",
    "predict_with_head",
    "pretrain",
    "sample_temporal_pair",
    "save_checkpoint",
    "sgd_step",
    "split_manifest",
    "stream_rng",
    "train_linear_probe",
    "validate_manifest",
    "write_manifest",
]
