"""Domain-sensitivity attribution and feature-memory modeling for
multi-domain tabular prediction.

The package covers the full path from data to comparison study: schema'd
multi-domain datasets (real or synthetic), a small reverse-mode autodiff
engine with embedding/MLP models, integrated-gradients attribution,
effect-weighted distribution distances that score each feature's domain
sensitivity, a dual-tower memory model whose retrievers attend into the
sensitive features, and training/evaluation orchestration with fingerprinted
artifacts.
"""

from .__about__ import __version__
from .attribution import AttributionMatrix, IgConfig, attribute_dataset, integrated_gradients
from .data import MultiDomainDataset, empirical_frequency, load_csv, write_csv
from .errors import (
    ConfigError,
    CsvParseError,
    FingerprintMismatchError,
    SchemaError,
    TrainingError,
    UndefinedAucError,
)
from .memory import (
    FlopsReport,
    MemoryConfig,
    MemoryModel,
    Retriever,
    attention,
    count_flops,
    linear_attention,
    retriever_flops,
    softmax_attention,
)
from .nn import (
    Adam,
    Dense,
    DnnConfig,
    DnnModel,
    EmbeddingSet,
    EncodedDataset,
    encode_dataset,
    load_checkpoint,
    model_fingerprint,
    save_checkpoint,
)
from .pipeline import (
    PipelineConfig,
    PipelineResult,
    RunManifest,
    StudyResult,
    run_ablation_study,
    run_pipeline,
    run_selection_study,
)
from .schema import FeatureSchema, FeatureSpec, equal_frequency_edges
from .sensitivity import (
    EffectWeightedDistribution,
    SensitivityReport,
    domain_sensitivity,
    effect_weighted_dist,
    effect_weighted_dist_seq,
    export_distributions_csv,
    js_divergence,
    rank_features,
    wasserstein_1d,
)
from .synth import SyntheticBundle, SyntheticConfig, generate_synthetic
from .tensor import Tensor, bce_with_logits, concat, sigmoid_array
from .training import EvalReport, TrainConfig, TrainHistory, auc, evaluate, predict_scores, train

__all__ = [
    "__version__",
    "AttributionMatrix",
    "IgConfig",
    "attribute_dataset",
    "integrated_gradients",
    "MultiDomainDataset",
    "empirical_frequency",
    "load_csv",
    "write_csv",
    "ConfigError",
    "CsvParseError",
    "FingerprintMismatchError",
    "SchemaError",
    "TrainingError",
    "UndefinedAucError",
    "FlopsReport",
    "MemoryConfig",
    "MemoryModel",
    "Retriever",
    "attention",
    "count_flops",
    "linear_attention",
    "retriever_flops",
    "softmax_attention",
    "Adam",
    "Dense",
    "DnnConfig",
    "DnnModel",
    "EmbeddingSet",
    "EncodedDataset",
    "encode_dataset",
    "load_checkpoint",
    "model_fingerprint",
    "save_checkpoint",
    "PipelineConfig",
    "PipelineResult",
    "RunManifest",
    "StudyResult",
    "run_ablation_study",
    "run_pipeline",
    "run_selection_study",
    "FeatureSchema",
    "FeatureSpec",
    "equal_frequency_edges",
    "EffectWeightedDistribution",
    "SensitivityReport",
    "domain_sensitivity",
    "effect_weighted_dist",
    "effect_weighted_dist_seq",
    "export_distributions_csv",
    "js_divergence",
    "rank_features",
    "wasserstein_1d",
    "SyntheticBundle",
    "SyntheticConfig",
    "generate_synthetic",
    "Tensor",
    "bce_with_logits",
    "concat",
    "sigmoid_array",
    "EvalReport",
    "TrainConfig",
    "TrainHistory",
    "auc",
    "evaluate",
    "predict_scores",
    "train",
]
