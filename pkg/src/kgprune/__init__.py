"""Domain KG bootstrapping: hierarchy expansion plus analogy-based pruning."""

from .analogy import (
    AnalogyConfiguration,
    AnalogyQuadruple,
    InputLayout,
    Padding,
    PairRef,
    PathMode,
    Validity,
    aggregate_votes,
    assemble_input,
    build_inference_quadruples,
    build_training_set,
    quadruple_validity,
)
from .convnet import (
    ModelConfig,
    ModelParams,
    load_checkpoint,
    parameter_count,
    predict,
    save_checkpoint,
    train,
)
from .deciders import (
    Concatenation,
    InferenceConfig,
    MissingPolicy,
    MLPConfig,
    ThresholdPrunerConfig,
    analogy_decider,
    depth_decider,
    mlp_decider,
    mlp_parameter_count,
    mlp_train,
    threshold_decider,
)
from .embeddings import (
    EmbeddingKind,
    EmbeddingTable,
    ProximityMetric,
    entity_vector,
    load_embeddings_binary,
    load_embeddings_text,
    nearest_labeled_pairs,
    proximity,
    write_embeddings_binary,
)
from .evaluation import (
    ConfusionBreakdown,
    GoldDataset,
    MetricsReport,
    compute_metrics,
    cross_validate,
    score_run,
    seen_unseen_breakdown,
    transfer_run,
)
from .expansion import (
    ExpansionResult,
    NodeFate,
    attach_paths,
    discovery_path,
    expand_downward,
    expand_upward,
)
from .pairs import Decision, ExpansionPath, LabeledPair
from .store import Direction, KGStore, ingest_triples, load_degree_sidecar

__version__ = "0.1.0"

__all__ = [
    "AnalogyConfiguration",
    "AnalogyQuadruple",
    "Concatenation",
    "ConfusionBreakdown",
    "Decision",
    "Direction",
    "EmbeddingKind",
    "EmbeddingTable",
    "ExpansionPath",
    "ExpansionResult",
    "GoldDataset",
    "InferenceConfig",
    "InputLayout",
    "KGStore",
    "LabeledPair",
    "MetricsReport",
    "MissingPolicy",
    "MLPConfig",
    "ModelConfig",
    "ModelParams",
    "NodeFate",
    "Padding",
    "PairRef",
    "PathMode",
    "ProximityMetric",
    "ThresholdPrunerConfig",
    "Validity",
    "aggregate_votes",
    "analogy_decider",
    "assemble_input",
    "attach_paths",
    "build_inference_quadruples",
    "build_training_set",
    "compute_metrics",
    "cross_validate",
    "depth_decider",
    "discovery_path",
    "entity_vector",
    "expand_downward",
    "expand_upward",
    "ingest_triples",
    "load_checkpoint",
    "load_degree_sidecar",
    "load_embeddings_binary",
    "load_embeddings_text",
    "mlp_decider",
    "mlp_parameter_count",
    "mlp_train",
    "nearest_labeled_pairs",
    "parameter_count",
    "predict",
    "proximity",
    "quadruple_validity",
    "save_checkpoint",
    "score_run",
    "seen_unseen_breakdown",
    "threshold_decider",
    "train",
    "transfer_run",
    "write_embeddings_binary",
]
