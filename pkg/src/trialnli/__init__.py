"""Entailment and evidence retrieval over clinical-trial-style reports."""

from .corpus import (
    FoldPlan,
    Instance,
    PremiseView,
    TokenSequence,
    TrialRecord,
    build_premise,
    encode_pair,
    load_dataset,
    save_dataset,
    split_folds,
)
from .encoder import EncoderParams, embed_and_encode, extend_positions, import_parameters
from .ensemble import DecisionThresholds, decide_taskA, decide_taskB, soft_ensemble
from .generative import format_input, normalize_entailment, score_instance
from .metrics import micro_prf, per_section_report
from .network import MultiGrainModel, NetworkConfig, mgnet_forward
from .objectives import LossConfig, loss_contrastive, loss_entailment, loss_multitask, loss_retrieval
from .consistency import build_agreement_matrix, rectify, score_pair
from .synthetic import generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "DecisionThresholds",
    "EncoderParams",
    "FoldPlan",
    "Instance",
    "LossConfig",
    "MultiGrainModel",
    "NetworkConfig",
    "PremiseView",
    "TokenSequence",
    "TrialRecord",
    "build_agreement_matrix",
    "build_premise",
    "decide_taskA",
    "decide_taskB",
    "embed_and_encode",
    "encode_pair",
    "extend_positions",
    "format_input",
    "generate_synthetic",
    "import_parameters",
    "load_dataset",
    "loss_contrastive",
    "loss_entailment",
    "loss_multitask",
    "loss_retrieval",
    "mgnet_forward",
    "micro_prf",
    "normalize_entailment",
    "per_section_report",
    "rectify",
    "save_dataset",
    "score_instance",
    "score_pair",
    "soft_ensemble",
    "split_folds",
]
