"""Multi-task crisis-tweet triage toolkit.

Two transfer-learning scenarios over pluggable backends (a dual-head
pooled-text encoder and a prompt-template seq2seq generator), the one-hot
and probability ensemble rules, run-file emission, and the evaluation
harness (macro F1 variants, IT accuracy, per-event nDCG@100).
"""

from .corpus import (
    ACTIONABLE_LABEL_IDS,
    LabelSpec,
    PriorityLevel,
    SplitConfig,
    TaskProfile,
    TweetRecord,
    builtin_profile,
    load_corpus,
    load_profile,
    priority_to_score,
    save_corpus,
    score_to_priority,
    split_train_validation,
)
from .encoder import (
    EncoderPrediction,
    MultiTaskHead,
    PooledEncoder,
    ToyHashEncoder,
    forward,
    multitask_loss,
    predict,
    threshold_its,
)
from .encoder import fit as fit_encoder
from .ensemble import (
    CombinedPrediction,
    ModelPrediction,
    combine,
    finalize,
    max_level_combine,
    max_prob_combine,
    max_score_combine,
    union_combine,
)
from .evaluation import (
    GoldSet,
    MetricsReport,
    evaluate_run,
    it_accuracy,
    macro_f1,
    ndcg_at_k,
    per_label_f1,
    priority_f1,
)
from .presets import PRESETS, RunPreset, run_preset
from .runio import RunEntry, emit_run, load_run
from .seq2seq import (
    ConditionalGenerator,
    EchoOracleGenerator,
    ParseDiagnostics,
    PromptPair,
    TaskKind,
    ToySeq2SeqGenerator,
    build_source,
    build_target,
    fit_seq2seq,
    interleave_batches,
    make_pairs,
    parse_generation,
    predict_seq2seq,
)
from .training import TrainingConfig, TrainingLog

__version__ = "0.1.0"

__all__ = [
    "ACTIONABLE_LABEL_IDS",
    "CombinedPrediction",
    "ConditionalGenerator",
    "EchoOracleGenerator",
    "EncoderPrediction",
    "GoldSet",
    "LabelSpec",
    "MetricsReport",
    "ModelPrediction",
    "MultiTaskHead",
    "PRESETS",
    "ParseDiagnostics",
    "PooledEncoder",
    "PriorityLevel",
    "PromptPair",
    "RunEntry",
    "RunPreset",
    "SplitConfig",
    "TaskKind",
    "TaskProfile",
    "ToyHashEncoder",
    "ToySeq2SeqGenerator",
    "TrainingConfig",
    "TrainingLog",
    "TweetRecord",
    "build_source",
    "build_target",
    "builtin_profile",
    "combine",
    "emit_run",
    "evaluate_run",
    "finalize",
    "fit_encoder",
    "fit_seq2seq",
    "forward",
    "interleave_batches",
    "it_accuracy",
    "load_corpus",
    "load_profile",
    "load_run",
    "macro_f1",
    "make_pairs",
    "max_level_combine",
    "max_prob_combine",
    "max_score_combine",
    "multitask_loss",
    "ndcg_at_k",
    "parse_generation",
    "per_label_f1",
    "predict",
    "predict_seq2seq",
    "priority_f1",
    "priority_to_score",
    "run_preset",
    "save_corpus",
    "score_to_priority",
    "split_train_validation",
    "threshold_its",
    "union_combine",
]
