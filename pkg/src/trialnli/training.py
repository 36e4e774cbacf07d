"""Single-model training loops with per-epoch dev evaluation.

The units differ per task: entailment trains on one tokenized pair per
instance (comparison premises concatenated with trial markers, whose
retrieval labels are fixed to 0), retrieval trains on one pair per
clinical trial report. Checkpoint selection keeps the best dev-F1
parameter snapshots.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .consistency import PAIR_SAME, ConsistencyModel, PairExample, encode_pair_input, pair_premise
from .corpus import Instance, TokenSequence, TrialRecord, build_premise, encode_pair, evidence_labels
from .generative import CONTRADICTION_WORD, ENTAILMENT_WORD, CharSeq2SeqScorer, format_input, score_instance
from .metrics import gold_entailment_decisions, gold_retrieval_decisions, micro_prf
from .network import MultiGrainModel
from .objectives import LossConfig, loss_contrastive, loss_entailment, loss_multitask, loss_retrieval
from .optim import Adafactor, Adam, clip_grad_norm, warmup_linear

logger = logging.getLogger(__name__)

LOSSES = ("a", "b", "mul", "cl")


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainSettings:
    loss: str = "mul"
    optimizer: str = "adam"
    lr_encoder: float = 2e-5
    lr_other: float = 1e-4
    batch_size: int = 32
    epochs: int = 100
    warmup_ratio: float | None = 0.3
    warmup_steps: int | None = None
    lr_decay: str = "linear"  # linear | none
    grad_clip: float = 1.0
    seed: int = 0
    loss_config: LossConfig = field(default_factory=LossConfig)

    def resolve_warmup(self, total_steps: int) -> int:
        if self.warmup_steps is not None:
            return self.warmup_steps
        if self.warmup_ratio is not None:
            return int(round(self.warmup_ratio * total_steps))
        return 0


# -- example preparation ----------------------------------------------------


def taskA_example(inst: Instance, trials, vocab, max_len: int):
    premise = build_premise(inst, trials, task="A")
    seq = encode_pair(inst.hypothesis, premise, vocab, max_len)
    y = 1 if inst.label == "Entailment" else 0
    return seq, y, evidence_labels(inst, premise)


def taskB_examples(inst: Instance, trials, vocab, max_len: int):
    views = build_premise(inst, trials, task="B")
    if not isinstance(views, tuple):
        views = (views,)
    out = []
    for view in views:
        seq = encode_pair(inst.hypothesis, view, vocab, max_len)
        out.append((seq, evidence_labels(inst, view)))
    return out


def _present_retrieval(seq: TokenSequence, evidence: dict, r: np.ndarray):
    """Align scored sentences with labels, skipping fully dropped ones."""
    idxs = sorted(evidence)
    scores = ad.concat([ad.reshape(evidence[i], (1,)) for i in idxs], axis=0)
    return scores, r[idxs]


# -- prediction helpers ------------------------------------------------------


def predict_taskA(model: MultiGrainModel, instances, trials, vocab) -> dict[str, np.ndarray]:
    out = {}
    for inst in instances:
        premise = build_premise(inst, trials, task="A")
        seq = encode_pair(inst.hypothesis, premise, vocab, model.max_len)
        p_a, _ = model.predict(seq)
        out[inst.uuid] = p_a
    return out


def predict_taskB(model: MultiGrainModel, instances, trials, vocab) -> dict[str, dict[str, np.ndarray]]:
    out = {}
    for inst in instances:
        views = build_premise(inst, trials, task="B")
        if not isinstance(views, tuple):
            views = (views,)
        roles = ("primary", "secondary")[: len(views)]
        entry = {}
        for role, view in zip(roles, views):
            seq = encode_pair(inst.hypothesis, view, vocab, model.max_len)
            _, p_b = model.predict(seq)
            entry[role] = p_b
        out[inst.uuid] = entry
    return out


def f1_taskA(probs: dict[str, np.ndarray], instances, eta_a: float) -> float:
    pred = {u: bool(p[1] > eta_a) for u, p in probs.items()}
    gold = gold_entailment_decisions([i for i in instances if i.uuid in pred])
    return micro_prf(pred, gold).f1


def f1_taskB(scores: dict[str, dict], instances, trials, eta_b: float) -> float:
    pred = {}
    for uuid, entry in scores.items():
        for role, arr in entry.items():
            for idx, s in enumerate(arr):
                pred[(uuid, role, idx)] = bool(s > eta_b)
    gold = gold_retrieval_decisions([i for i in instances if i.uuid in scores], trials)
    return micro_prf(pred, gold).f1


# -- snapshots ----------------------------------------------------------------


def snapshot_arrays(named) -> dict[str, np.ndarray]:
    return {name: t.data.copy() for name, t in named}


def restore_arrays(named, arrays: dict[str, np.ndarray]):
    for name, t in named:
        t.data[...] = arrays[name]


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_metric: float


# -- multigrain loop -----------------------------------------------------------


def train_multigrain(
    model: MultiGrainModel,
    train_instances: list[Instance],
    trials: dict[str, TrialRecord],
    vocab,
    task: str,
    settings: TrainSettings,
    dev_instances: list[Instance] | None = None,
    n_best: int = 1,
):
    """Train one network; returns (history, best snapshots).

    Snapshots are (dev_metric, epoch, arrays) tuples, best first. With
    no dev set the final parameters are the single snapshot.
    """
    if settings.loss not in LOSSES:
        raise ValueError(f"unknown loss {settings.loss!r}")
    rng = np.random.default_rng(settings.seed)
    if task == "A" or settings.loss in ("a", "mul", "cl"):
        units = [taskA_example(inst, trials, vocab, model.max_len) for inst in train_instances]
    else:
        units = [ex for inst in train_instances for ex in taskB_examples(inst, trials, vocab, model.max_len)]

    steps_per_epoch = max(1, math.ceil(len(units) / settings.batch_size))
    total_steps = steps_per_epoch * settings.epochs
    warmup = settings.resolve_warmup(total_steps)
    enc_params, net_params = model.parameter_groups()
    opt = Adam([(enc_params, settings.lr_encoder), (net_params, settings.lr_other)])

    history: list[EpochRecord] = []
    best: list[tuple[float, int, dict]] = []
    step = 0
    for epoch in range(settings.epochs):
        order = rng.permutation(len(units))
        epoch_loss = 0.0
        for start in range(0, len(units), settings.batch_size):
            batch = [units[i] for i in order[start : start + settings.batch_size]]
            opt.zero_grad()
            loss = _batch_loss(model, batch, task, settings, rng)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(f"non-finite loss {value} at epoch {epoch}, step {step}")
            loss.backward()
            clip_grad_norm([t for _, t in model.named_parameters()], settings.grad_clip)
            opt.step(lr_scale=warmup_linear(step, total_steps, warmup, settings.lr_decay))
            epoch_loss += value * len(batch)
            step += 1
        epoch_loss /= len(units)

        if dev_instances:
            if task == "A":
                metric = f1_taskA(predict_taskA(model, dev_instances, trials, vocab), dev_instances,
                                  model.thresholds["eta_a"])
            else:
                metric = f1_taskB(predict_taskB(model, dev_instances, trials, vocab), dev_instances, trials,
                                  model.thresholds["eta_b"])
        else:
            metric = -epoch_loss
        history.append(EpochRecord(epoch=epoch, train_loss=epoch_loss, dev_metric=metric))
        logger.info("epoch %d loss %.4f dev %.4f", epoch, epoch_loss, metric)
        if len(best) < n_best or metric > best[-1][0]:
            best.append((metric, epoch, snapshot_arrays(model.named_parameters())))
            best.sort(key=lambda x: (-x[0], x[1]))
            del best[n_best:]

    if not best:
        best = [(0.0, settings.epochs - 1, snapshot_arrays(model.named_parameters()))]
    restore_arrays(model.named_parameters(), best[0][2])
    return history, best


def _batch_loss(model: MultiGrainModel, batch, task: str, settings: TrainSettings, rng) -> Tensor:
    cfg = settings.loss_config
    if settings.loss == "cl":
        pas, globals_, ys = [], [], []
        for seq, y, _r in batch:
            p_a, _, h_g = model.forward(seq, train=True, rng=rng)
            pas.append(p_a)
            globals_.append(h_g)
            ys.append(y)
        if len(batch) >= 2:
            return loss_contrastive(ad.concat(globals_, axis=0), ys, pas, cfg)
        return loss_entailment(pas[0], ys[0])
    terms = []
    for unit in batch:
        if task == "A" or settings.loss in ("a", "mul"):
            seq, y, r = unit
            p_a, evidence, _ = model.forward(seq, train=True, rng=rng)
            if settings.loss == "a":
                term = loss_entailment(p_a, y)
            elif settings.loss == "mul":
                scores, labels = _present_retrieval(seq, evidence, r)
                term = loss_multitask(loss_entailment(p_a, y), loss_retrieval(scores, labels), cfg)
            else:
                scores, labels = _present_retrieval(seq, evidence, r)
                term = loss_retrieval(scores, labels)
        else:
            seq, r = unit
            _, evidence, _ = model.forward(seq, train=True, rng=rng)
            scores, labels = _present_retrieval(seq, evidence, r)
            term = loss_retrieval(scores, labels)
        terms.append(ad.reshape(term, (1,)))
    return ad.mul(ad.tsum(ad.concat(terms, axis=0)), 1.0 / len(terms))


# -- consistency loop ----------------------------------------------------------


def train_consistency(
    model: ConsistencyModel,
    examples: list[PairExample],
    trials: dict[str, TrialRecord],
    vocab,
    settings: TrainSettings,
    dev_examples: list[PairExample] | None = None,
):
    """Cross-entropy over (same, different); dev metric is accuracy."""
    rng = np.random.default_rng(settings.seed)
    units = []
    for ex in examples:
        ids = encode_pair_input(ex.hyp_a, ex.hyp_b, pair_premise(ex, trials), vocab, model.max_len)
        units.append((ids, 0 if ex.label == PAIR_SAME else 1))
    dev_units = []
    for ex in dev_examples or []:
        ids = encode_pair_input(ex.hyp_a, ex.hyp_b, pair_premise(ex, trials), vocab, model.max_len)
        dev_units.append((ids, 0 if ex.label == PAIR_SAME else 1))

    steps_per_epoch = max(1, math.ceil(len(units) / settings.batch_size))
    total_steps = steps_per_epoch * settings.epochs
    warmup = settings.resolve_warmup(total_steps)
    enc_params, head_params = model.parameter_groups()
    opt = Adam([(enc_params, settings.lr_encoder), (head_params, settings.lr_other)])

    history = []
    best_metric, best_arrays = -1.0, None
    step = 0
    for epoch in range(settings.epochs):
        order = rng.permutation(len(units))
        epoch_loss = 0.0
        for start in range(0, len(units), settings.batch_size):
            chunk = [units[i] for i in order[start : start + settings.batch_size]]
            opt.zero_grad()
            terms = []
            for ids, label in chunk:
                c = model.forward_ids(ids, train=True, rng=rng, pdrop=0.05)
                # label indexes (same, different) directly; CE picks -log c[label]
                terms.append(ad.reshape(loss_entailment(c, label), (1,)))
            loss = ad.mul(ad.tsum(ad.concat(terms, axis=0)), 1.0 / len(terms))
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            clip_grad_norm([t for _, t in model.named_parameters()], settings.grad_clip)
            opt.step(lr_scale=warmup_linear(step, total_steps, warmup, settings.lr_decay))
            epoch_loss += value * len(chunk)
            step += 1
        epoch_loss /= len(units)

        if dev_units:
            hits = 0
            with ad.no_grad():
                for ids, label in dev_units:
                    c = model.forward_ids(ids)
                    hits += int(np.argmax(c.data) == label)
            metric = hits / len(dev_units)
        else:
            metric = -epoch_loss
        history.append(EpochRecord(epoch=epoch, train_loss=epoch_loss, dev_metric=metric))
        logger.info("consistency epoch %d loss %.4f dev %.4f", epoch, epoch_loss, metric)
        if metric > best_metric:
            best_metric = metric
            best_arrays = snapshot_arrays(model.named_parameters())
    if best_arrays is not None:
        restore_arrays(model.named_parameters(), best_arrays)
    return history


# -- generative loop -------------------------------------------------------------


def train_generative(
    scorer: CharSeq2SeqScorer,
    train_instances: list[Instance],
    trials: dict[str, TrialRecord],
    settings: TrainSettings,
    dev_instances: list[Instance] | None = None,
    eta_a: float = 0.5,
):
    """Sequence cross-entropy on label words with the factored optimizer."""
    rng = np.random.default_rng(settings.seed)
    units = []
    for inst in train_instances:
        premise = build_premise(inst, trials, task="A")
        target = ENTAILMENT_WORD if inst.label == "Entailment" else CONTRADICTION_WORD
        units.append((format_input(inst.hypothesis, premise), target))

    steps_per_epoch = max(1, math.ceil(len(units) / settings.batch_size))
    total_steps = steps_per_epoch * settings.epochs
    warmup = settings.resolve_warmup(total_steps)
    if settings.optimizer == "adam":
        opt = Adam([(scorer.params, settings.lr_other)])
    else:
        opt = Adafactor([(scorer.params, settings.lr_other)])

    history = []
    best_metric, best_arrays = -math.inf, None
    step = 0
    for epoch in range(settings.epochs):
        order = rng.permutation(len(units))
        epoch_loss = 0.0
        for start in range(0, len(units), settings.batch_size):
            chunk = [units[i] for i in order[start : start + settings.batch_size]]
            opt.zero_grad()
            terms = [ad.reshape(ad.mul(scorer.target_log_prob(inp, tgt), -1.0), (1,)) for inp, tgt in chunk]
            loss = ad.mul(ad.tsum(ad.concat(terms, axis=0)), 1.0 / len(terms))
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            clip_grad_norm(list(scorer.params.values()), settings.grad_clip)
            opt.step(lr_scale=warmup_linear(step, total_steps, warmup, settings.lr_decay))
            epoch_loss += value * len(chunk)
            step += 1
        epoch_loss /= len(units)

        if dev_instances:
            probs = {inst.uuid: score_instance(scorer, inst, trials) for inst in dev_instances}
            metric = f1_taskA(probs, dev_instances, eta_a)
        else:
            metric = -epoch_loss
        history.append(EpochRecord(epoch=epoch, train_loss=epoch_loss, dev_metric=metric))
        logger.info("generative epoch %d loss %.4f dev %.4f", epoch, epoch_loss, metric)
        if metric > best_metric:
            best_metric = metric
            best_arrays = snapshot_arrays(scorer.named_parameters())
    if best_arrays is not None:
        restore_arrays(scorer.named_parameters(), best_arrays)
    return history
