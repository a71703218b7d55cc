"""RED-CT: LLM-annotated data with confidence-routed expert resupply.

The pipeline labels a corpus with an LLM (or a calibrated simulator),
scores each label's confidence from the label-token log-probabilities,
sends the least-confident items per class to human experts, fuses expert
one-hot labels with sigmoid-weighted soft labels, trains a compact linear
classifier, and exports a portable artifact for edge inference.
"""

from .core import (
    Dataset,
    DatasetError,
    Document,
    LabelTokenLogProbs,
    LlmAnnotation,
    RedctError,
    SchemaError,
    SoftLabel,
    TaskSchema,
    load_dataset,
    save_dataset,
)
from .evaluation import (
    EvalReport,
    KsResult,
    MatrixResult,
    SeparationReport,
    SettingResult,
    SweepResult,
    aggregate_reports,
    confidence_separation_report,
    evaluate_model,
    ks_two_sample,
    random_baseline,
    run_matrix,
    sweep_expert_fraction,
    weighted_f1,
)
from .evaluation import EvalError
from .labeler import (
    BackendError,
    BackendTransportError,
    HttpBackendConfig,
    HttpChatBackend,
    PromptError,
    PromptTemplates,
    SimulatorBackend,
    SimulatorConfig,
    UnparseableResponse,
    confidence_score,
    label_corpus,
    label_document,
    make_annotation,
    render_prompt,
    simulate_labels,
)
from .sampler import (
    SamplingError,
    SamplingManifest,
    apply_expert_labels,
    ceil_fraction,
    pending_doc_ids,
    sample_confidence_informed,
    sample_random,
)
from .softlabel import (
    FusedExample,
    FusionError,
    expit,
    fuse,
    hard_label_from_annotation,
    load_fused,
    save_fused,
    soft_label_from_annotation,
    soft_label_from_expert,
)
from .trainer import (
    ArtifactError,
    FeaturizerConfig,
    LinearModel,
    TrainConfig,
    TrainingError,
    export_model,
    featurize,
    gradient,
    import_model,
    predict,
    soft_ce_loss,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ArtifactError",
    "BackendError",
    "BackendTransportError",
    "Dataset",
    "DatasetError",
    "Document",
    "EvalError",
    "EvalReport",
    "FeaturizerConfig",
    "FusedExample",
    "FusionError",
    "HttpBackendConfig",
    "HttpChatBackend",
    "KsResult",
    "LabelTokenLogProbs",
    "LinearModel",
    "LlmAnnotation",
    "MatrixResult",
    "PromptError",
    "PromptTemplates",
    "RedctError",
    "SamplingError",
    "SamplingManifest",
    "SchemaError",
    "SeparationReport",
    "SettingResult",
    "SimulatorBackend",
    "SimulatorConfig",
    "SoftLabel",
    "SweepResult",
    "TaskSchema",
    "TrainConfig",
    "TrainingError",
    "UnparseableResponse",
    "aggregate_reports",
    "apply_expert_labels",
    "ceil_fraction",
    "confidence_score",
    "confidence_separation_report",
    "evaluate_model",
    "expit",
    "export_model",
    "featurize",
    "fuse",
    "gradient",
    "import_model",
    "hard_label_from_annotation",
    "ks_two_sample",
    "label_corpus",
    "label_document",
    "load_dataset",
    "load_fused",
    "make_annotation",
    "pending_doc_ids",
    "predict",
    "random_baseline",
    "render_prompt",
    "run_matrix",
    "sample_confidence_informed",
    "sample_random",
    "save_dataset",
    "save_fused",
    "simulate_labels",
    "soft_ce_loss",
    "soft_label_from_annotation",
    "soft_label_from_expert",
    "sweep_expert_fraction",
    "train",
    "weighted_f1",
]
