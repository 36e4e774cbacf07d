"""Cross-validation training, soft ensembling and threshold decisions.

Checkpoint bookkeeping follows the published recipe: the entailment
ensemble keeps one best-F1 checkpoint per fold per model, the retrieval
ensemble keeps two per fold per model plus one hold-out checkpoint per
model. Ensembling is the arithmetic mean of predicted probabilities;
an optional pairwise-consistency pass rectifies entailment
probabilities group by group before thresholding.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass

import numpy as np

from .consistency import ConsistencyModel, build_agreement_matrix, group_instances, rectify
from .corpus import Instance, TrialRecord, build_premise, split_folds
from .encoder import init_encoder_params
from .generative import CharSeq2SeqScorer, score_instance
from .network import MultiGrainModel, NetworkConfig
from .presets import ENCODER_PRESETS, MODEL_SPECS, TASK_A_MODELS, TASK_B_MODELS, ModelSpec
from .training import (
    TrainingDivergedError,
    TrainSettings,
    predict_taskA,
    predict_taskB,
    train_generative,
    train_multigrain,
)

logger = logging.getLogger(__name__)

TASK_A_KEEP = 1  # best checkpoints kept per fold
TASK_B_KEEP = 2


class KeyAlignmentError(ValueError):
    pass


@dataclass
class DecisionThresholds:
    eta_a: float = 0.57
    eta_b: float = 0.53

    def validate(self):
        if not (0.0 < self.eta_a < 1.0 and 0.0 < self.eta_b < 1.0):
            raise ValueError("thresholds must lie strictly inside (0, 1)")


@dataclass
class CheckpointMeta:
    model: str
    fold: int  # -1 marks the hold-out checkpoint
    metric: float
    path: str
    task: str
    rank: int = 0  # 0 = best within its fold

    def to_json(self) -> dict:
        return asdict(self)


def plan_checkpoints(task: str, model_names=None, k: int = 10) -> list[dict]:
    """Dry-run bookkeeping: which checkpoints the full recipe trains."""
    if task == "A":
        names = tuple(model_names) if model_names else TASK_A_MODELS
        return [
            {"model": name, "fold": fold, "task": "A", "rank": 0}
            for name in names
            for fold in range(k)
        ]
    if task == "B":
        names = tuple(model_names) if model_names else TASK_B_MODELS
        plan = [
            {"model": name, "fold": fold, "task": "B", "rank": rank}
            for name in names
            for fold in range(k)
            for rank in range(TASK_B_KEEP)
        ]
        plan.extend({"model": name, "fold": -1, "task": "B", "rank": 0} for name in names)
        return plan
    raise ValueError(f"task must be 'A' or 'B', got {task!r}")


# -- model construction ------------------------------------------------------


def build_model(spec: ModelSpec, vocab_size: int, scale: str, seed: int, thresholds: DecisionThresholds,
                net_overrides: dict | None = None):
    """Fresh randomly initialized model for one registry entry."""
    if spec.network == "generative":
        return CharSeq2SeqScorer(seed=seed)
    preset = ENCODER_PRESETS["toy" if scale == "toy" else ("paper-1024" if spec.max_len == 1024 else "paper-512")]
    max_len = min(spec.max_len or preset.max_positions, preset.max_positions)
    enc = init_encoder_params(
        L=preset.L, d=preset.d, n_heads=preset.n_heads, d_ff=preset.d_ff,
        vocab_size=vocab_size, max_positions=preset.max_positions, seed=seed,
    )
    if spec.network == "pairwise":
        return ConsistencyModel.create(enc, seed=seed + 1, max_len=max_len)
    overrides = net_overrides or {}
    cfg = NetworkConfig(
        sentence_encoder=spec.sentence_encoder,
        token_encoder=spec.token_encoder,
        d=preset.d,
        l_s=overrides.get("l_s", 1),
        n_heads=preset.n_heads,
        d_ff=preset.d_ff,
        dropout=overrides.get("dropout", 0.05),
    )
    return MultiGrainModel.create(enc, cfg, seed=seed + 1, max_len=max_len,
                                  thresholds={"eta_a": thresholds.eta_a, "eta_b": thresholds.eta_b})


# -- cross-validation training -------------------------------------------------


def train_cv(
    model_name: str,
    instances: list[Instance],
    trials: dict[str, TrialRecord],
    vocab,
    folds,
    task: str,
    settings: TrainSettings,
    out_dir: str,
    scale: str = "toy",
    thresholds: DecisionThresholds | None = None,
    include_holdout: bool | None = None,
) -> list[CheckpointMeta]:
    """Train one model across all folds; save and index the kept checkpoints.

    Folds that diverge are reported and skipped. ``include_holdout``
    defaults to the task-B recipe (one extra model selected on fold 0).
    """
    spec = MODEL_SPECS[model_name]
    thresholds = thresholds or DecisionThresholds()
    keep = TASK_A_KEEP if task == "A" else TASK_B_KEEP
    if include_holdout is None:
        include_holdout = task == "B"
    by_uuid = {inst.uuid: inst for inst in instances}
    os.makedirs(out_dir, exist_ok=True)

    checkpoints: list[CheckpointMeta] = []
    failures: list[dict] = []
    fold_ids = list(range(folds.k)) + ([-1] if include_holdout else [])
    for fold in fold_ids:
        dev_fold = 0 if fold == -1 else fold
        train_insts = [by_uuid[u] for u, f in folds.assignment.items() if f != dev_fold]
        dev_insts = [by_uuid[u] for u, f in folds.assignment.items() if f == dev_fold]
        seed = settings.seed + 1000 * (fold + 2)
        try:
            metas = _train_one_fold(
                spec, train_insts, dev_insts, trials, vocab, task, settings, seed,
                out_dir, fold, keep if fold != -1 else 1, scale, thresholds,
            )
            checkpoints.extend(metas)
        except TrainingDivergedError as e:
            logger.warning("fold %s of %s failed: %s", fold, model_name, e)
            failures.append({"model": model_name, "fold": fold, "error": str(e)})

    index_path = os.path.join(out_dir, "index.json")
    existing = []
    if os.path.exists(index_path):
        with open(index_path, encoding="utf-8") as fh:
            existing = json.load(fh).get("checkpoints", [])
    with open(index_path, "w", encoding="utf-8") as fh:
        json.dump(
            {"checkpoints": existing + [c.to_json() for c in checkpoints], "failures": failures},
            fh,
            indent=1,
        )
    return checkpoints


def _train_one_fold(spec, train_insts, dev_insts, trials, vocab, task, settings, seed,
                    out_dir, fold, keep, scale, thresholds):
    from dataclasses import replace as dc_replace

    from .training import restore_arrays

    fold_settings = dc_replace(settings, seed=seed)
    if spec.network == "generative":
        scorer = build_model(spec, len(vocab), scale, seed, thresholds)
        history = train_generative(scorer, train_insts, trials, fold_settings, dev_insts, eta_a=thresholds.eta_a)
        best_metric = max(h.dev_metric for h in history)
        path = os.path.join(out_dir, f"{spec.name}-fold{fold}")
        scorer.save(path)
        return [CheckpointMeta(spec.name, fold, best_metric, path, task, 0)]

    fold_settings = dc_replace(fold_settings, loss=spec.loss)
    model = build_model(spec, len(vocab), scale, seed, thresholds)
    _, best = train_multigrain(model, train_insts, trials, vocab, task, fold_settings, dev_insts, n_best=keep)
    metas = []
    for rank, (metric, _epoch, arrays) in enumerate(best):
        restore_arrays(model.named_parameters(), arrays)
        path = os.path.join(out_dir, f"{spec.name}-fold{fold}-r{rank}")
        model.save(path)
        metas.append(CheckpointMeta(spec.name, fold, metric, path, task, rank))
    return metas


def load_checkpoint(path: str):
    """Open a checkpoint directory as the right model kind."""
    with open(os.path.join(path, "config.json"), encoding="utf-8") as fh:
        doc = json.load(fh)
    kind = doc.get("kind", "multigrain")
    if kind == "generative":
        return CharSeq2SeqScorer.load(path)
    if kind == "pairwise":
        return ConsistencyModel.load(path)
    return MultiGrainModel.load(path)


def load_index(path: str) -> list[CheckpointMeta]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return [CheckpointMeta(**raw) for raw in doc["checkpoints"]]


# -- prediction surfaces --------------------------------------------------------


def checkpoint_predictions_taskA(model, instances, trials, vocab) -> dict[str, np.ndarray]:
    if isinstance(model, CharSeq2SeqScorer):
        return {inst.uuid: score_instance(model, inst, trials) for inst in instances}
    return predict_taskA(model, instances, trials, vocab)


def checkpoint_predictions_taskB(model, instances, trials, vocab) -> dict[str, dict[str, np.ndarray]]:
    return predict_taskB(model, instances, trials, vocab)


def soft_ensemble(prediction_sets: list):
    """Arithmetic mean of aligned prediction structures.

    Structures may be nested dicts bottoming out in float arrays; all
    contributors must cover identical keys and shapes.
    """
    if not prediction_sets:
        raise ValueError("need at least one prediction set")
    first = prediction_sets[0]
    if isinstance(first, dict):
        keys = set(first)
        for other in prediction_sets[1:]:
            if set(other) != keys:
                diff = keys.symmetric_difference(set(other))
                raise KeyAlignmentError(f"prediction sets disagree on key {sorted(diff)[0]!r}")
        return {k: soft_ensemble([s[k] for s in prediction_sets]) for k in first}
    arrays = [np.asarray(s, dtype=np.float64) for s in prediction_sets]
    for a in arrays[1:]:
        if a.shape != arrays[0].shape:
            raise KeyAlignmentError(f"prediction shapes disagree: {a.shape} vs {arrays[0].shape}")
    return np.mean(arrays, axis=0)


def apply_joint_inference(
    taskA_probs: dict[str, np.ndarray],
    instances: list[Instance],
    trials: dict[str, TrialRecord],
    model: ConsistencyModel,
    vocab,
) -> dict[str, np.ndarray]:
    """Rectify each premise-sharing group; singletons pass through."""
    by_uuid = {inst.uuid: inst for inst in instances}
    covered = [by_uuid[u] for u in taskA_probs if u in by_uuid]
    rectified = {u: np.asarray(p, dtype=np.float64).copy() for u, p in taskA_probs.items()}
    for group in group_instances(covered):
        if group.n < 2:
            continue
        members = [by_uuid[u] for u in group.uuids]
        premise = build_premise(members[0], trials, task="A")
        hyps = [m.hypothesis for m in members]
        agreement = build_agreement_matrix(hyps, premise, model, vocab)
        stacked = np.stack([taskA_probs[m.uuid] for m in members])
        fixed = rectify(stacked, agreement)
        for m, row in zip(members, fixed):
            rectified[m.uuid] = row
    return rectified


def decide_taskA(probs: dict[str, np.ndarray], thresholds: DecisionThresholds) -> dict[str, str]:
    """Entailment iff the entailment probability strictly exceeds eta_a."""
    return {u: ("Entailment" if p[1] > thresholds.eta_a else "Contradiction") for u, p in probs.items()}


def decide_taskB(scores: dict[str, dict[str, np.ndarray]], thresholds: DecisionThresholds) -> dict[str, dict]:
    """Select sentence i iff its score strictly exceeds eta_b.

    Truncated or marker sentences carry score 0 and can never pass a
    positive threshold.
    """
    out = {}
    for uuid, entry in scores.items():
        out[uuid] = {
            role: {
                "scores": [float(s) for s in arr],
                "selected": [i for i, s in enumerate(arr) if s > thresholds.eta_b],
            }
            for role, arr in entry.items()
        }
    return out


# -- prediction file ------------------------------------------------------------


def write_predictions(path, taskA_probs, taskA_labels, taskB_decided, meta: dict):
    doc = {
        "taskA": {
            u: {"p": [float(p[0]), float(p[1])], "label": taskA_labels[u]} for u, p in (taskA_probs or {}).items()
        },
        "taskB": taskB_decided or {},
        "meta": meta,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_predictions(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def sweep_thresholds(probs: dict[str, np.ndarray], instances: list[Instance], grid=None) -> dict:
    """Grid-search eta_a for best F1. Extension utility: the published
    system fixes its thresholds and never documents a sweep."""
    from .metrics import gold_entailment_decisions, micro_prf

    grid = grid if grid is not None else np.linspace(0.05, 0.95, 19)
    gold = gold_entailment_decisions([i for i in instances if i.uuid in probs])
    best = {"eta_a": 0.5, "f1": -1.0}
    for eta in grid:
        pred = {u: bool(p[1] > eta) for u, p in probs.items()}
        f1 = micro_prf(pred, gold).f1
        if f1 > best["f1"]:
            best = {"eta_a": float(eta), "f1": f1}
    return best
