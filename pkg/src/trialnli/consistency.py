"""Pairwise label-consistency network and prediction rectification.

Hypotheses sharing a premise form groups; a transformer encoder over
[CLS] S_i [SEP] S_j [SEP] P [SEP] judges whether a pair shares its
entailment label. Judgments fill a binary agreement matrix that
rectifies the group's ensemble probabilities: agreeing neighbours vote
with their prediction, disagreeing ones with its complement.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .containers import load_container, save_container
from .corpus import Instance, PremiseView, TrialRecord, build_premise
from .encoder import EncoderParams, embed_and_encode, export_parameters, import_parameters

logger = logging.getLogger(__name__)

PAIR_SAME = "same"
PAIR_DIFFERENT = "different"

CONFIG_FILE = "config.json"
ENCODER_FILE = "encoder.npz"
HEAD_FILE = "head.npz"


class Paraphraser(Protocol):
    def paraphrase(self, text: str) -> str: ...


@dataclass
class HypothesisGroup:
    """Instances sharing (primary trial, secondary trial, section)."""

    primary_trial_id: str
    secondary_trial_id: str | None
    section: str
    uuids: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.uuids)


@dataclass
class PairExample:
    hyp_a: str
    hyp_b: str
    label: str  # same | different
    primary_trial_id: str
    secondary_trial_id: str | None
    section: str
    source_uuids: tuple[str, str]


def group_instances(instances: list[Instance]) -> list[HypothesisGroup]:
    groups: dict[tuple, HypothesisGroup] = {}
    for inst in instances:
        key = (inst.primary_trial_id, inst.secondary_trial_id, inst.section)
        if key not in groups:
            groups[key] = HypothesisGroup(*key)
        groups[key].uuids.append(inst.uuid)
    return list(groups.values())


def encode_pair_input(hyp_a: str, hyp_b: str, premise: PremiseView, vocab, max_len: int) -> np.ndarray:
    """[CLS] S_i [SEP] S_j [SEP] P [SEP]; premise tail-truncated to fit."""
    a = vocab.encode(hyp_a)
    b = vocab.encode(hyp_b)
    if not a or not b:
        raise ValueError("both hypotheses must be non-empty")
    head = [vocab.cls_id] + a + [vocab.sep_id] + b + [vocab.sep_id]
    if len(head) + 1 > max_len:
        raise ValueError(f"hypothesis pair alone needs {len(head) + 1} tokens, exceeding max_len={max_len}")
    budget = max_len - len(head) - 1
    prem = vocab.encode(" ".join(premise.sentences))[:budget]
    return np.asarray(head + prem + [vocab.sep_id], dtype=np.int64)


class ConsistencyModel:
    """Encoder plus a two-layer tanh MLP over the [CLS] state."""

    def __init__(self, enc: EncoderParams, head: dict[str, Tensor], max_len: int = 128):
        self.enc = enc
        self.head = head
        self.max_len = max_len

    @classmethod
    def create(cls, enc: EncoderParams, seed: int, max_len: int = 128):
        rng = np.random.default_rng(seed)
        d = enc.d
        head = {
            "wj1": Tensor(rng.normal(0.0, 0.02, (d, d)), requires_grad=True),
            "bj1": Tensor(np.zeros(d), requires_grad=True),
            "wj2": Tensor(rng.normal(0.0, 0.02, (d, 2)), requires_grad=True),
            "bj2": Tensor(np.zeros(2), requires_grad=True),
        }
        return cls(enc, head, max_len=max_len)

    def named_parameters(self):
        yield from self.enc.params.items()
        yield from self.head.items()

    def parameter_groups(self):
        return dict(self.enc.params), dict(self.head)

    def zero_grad(self):
        for _, t in self.named_parameters():
            t.grad = None

    def forward_ids(self, token_ids: np.ndarray, train: bool = False, rng=None, pdrop: float = 0.0) -> Tensor:
        reps = embed_and_encode(token_ids, self.enc, train, rng, pdrop)
        cls_state = ad.take_rows(reps, [0])
        hidden = ad.tanh(ad.add(ad.matmul(cls_state, self.head["wj1"]), self.head["bj1"]))
        logits = ad.add(ad.matmul(hidden, self.head["wj2"]), self.head["bj2"])
        return ad.reshape(ad.softmax(logits, axis=-1), (2,))

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        export_parameters(self.enc, os.path.join(directory, ENCODER_FILE))
        save_container(os.path.join(directory, HEAD_FILE), {k: t.data for k, t in self.head.items()}, {"kind": "pairwise"})
        with open(os.path.join(directory, CONFIG_FILE), "w", encoding="utf-8") as fh:
            json.dump({"kind": "pairwise", "max_len": self.max_len}, fh, indent=1)

    @classmethod
    def load(cls, directory):
        with open(os.path.join(directory, CONFIG_FILE), encoding="utf-8") as fh:
            doc = json.load(fh)
        enc = import_parameters(os.path.join(directory, ENCODER_FILE))
        arrays, _ = load_container(os.path.join(directory, HEAD_FILE))
        head = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
        return cls(enc, head, max_len=doc["max_len"])


def score_pair(model: ConsistencyModel, hyp_a: str, hyp_b: str, premise: PremiseView, vocab) -> np.ndarray:
    """(same-label, different-label) probabilities for an ordered pair."""
    ids = encode_pair_input(hyp_a, hyp_b, premise, vocab, model.max_len)
    with ad.no_grad():
        return model.forward_ids(ids).data.copy()


def build_agreement_matrix(hypotheses: list[str], premise: PremiseView, model: ConsistencyModel, vocab) -> np.ndarray:
    """Binary n x n agreement judgments, symmetrized over pair order.

    The diagonal is fixed to 1; off-diagonal entries threshold the mean
    same-label probability of the two orderings at 0.5.
    """
    n = len(hypotheses)
    agree = np.eye(n, dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            c_ij = score_pair(model, hypotheses[i], hypotheses[j], premise, vocab)
            c_ji = score_pair(model, hypotheses[j], hypotheses[i], premise, vocab)
            same = 0.5 * (c_ij[0] + c_ji[0])
            agree[i, j] = agree[j, i] = int(same > 0.5)
    return agree


def rectify(predictions: np.ndarray, agreement: np.ndarray) -> np.ndarray:
    """Average agreement-aligned votes over the group.

    predictions: (n, 2) normalized rows. Each member j contributes its
    prediction when judged same-label and the complement otherwise; for
    normalized pairs the complement is the swap, so outputs stay
    normalized.
    """
    p = np.asarray(predictions, dtype=np.float64)
    agr = np.asarray(agreement, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 2:
        raise ValueError(f"predictions must be (n, 2), got {p.shape}")
    n = p.shape[0]
    if agr.shape != (n, n):
        raise ValueError(f"agreement matrix {agr.shape} does not match {n} predictions")
    return (agr @ p + (1.0 - agr) @ (1.0 - p)) / n


def generate_pair_training_data(
    instances: list[Instance],
    trials: dict[str, TrialRecord],
    paraphraser: Paraphraser,
) -> tuple[list[PairExample], dict]:
    """Four sequences per contradicting pair: two paraphrase positives
    in diagonal order, both orderings of the original pair as negatives.

    Paraphraser failures skip the pair; the count is reported in stats.
    """
    by_uuid = {inst.uuid: inst for inst in instances}
    examples: list[PairExample] = []
    skipped = 0
    pairs_seen = 0
    for grp in group_instances(instances):
        members = [by_uuid[u] for u in grp.uuids]
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                a, b = members[i], members[j]
                if a.label is None or b.label is None or a.label == b.label:
                    continue
                pairs_seen += 1
                try:
                    a_para = paraphraser.paraphrase(a.hypothesis)
                    b_para = paraphraser.paraphrase(b.hypothesis)
                except Exception as e:
                    skipped += 1
                    logger.warning("paraphraser failed on pair (%s, %s): %s", a.uuid, b.uuid, e)
                    continue
                common = dict(
                    primary_trial_id=grp.primary_trial_id,
                    secondary_trial_id=grp.secondary_trial_id,
                    section=grp.section,
                    source_uuids=(a.uuid, b.uuid),
                )
                examples.append(PairExample(a.hypothesis, a_para, PAIR_SAME, **common))
                examples.append(PairExample(b.hypothesis, b_para, PAIR_SAME, **common))
                examples.append(PairExample(a.hypothesis, b.hypothesis, PAIR_DIFFERENT, **common))
                examples.append(PairExample(b.hypothesis, a.hypothesis, PAIR_DIFFERENT, **common))
    stats = {"contradicting_pairs": pairs_seen, "skipped_pairs": skipped, "sequences": len(examples)}
    return examples, stats


def pair_premise(example: PairExample, trials: dict[str, TrialRecord]) -> PremiseView:
    """The shared premise for a pair, in entailment-task form."""
    probe = Instance(
        uuid="pair-probe",
        kind="Comparison" if example.secondary_trial_id else "Single",
        section=example.section,
        hypothesis=example.hyp_a,
        primary_trial_id=example.primary_trial_id,
        secondary_trial_id=example.secondary_trial_id,
    )
    return build_premise(probe, trials, task="A")


def save_pair_data(examples: list[PairExample], trials: dict[str, TrialRecord], stats: dict, path):
    doc = {
        "trials": {tid: dict(rec.sections) for tid, rec in trials.items()},
        "pairs": [
            {
                "hyp_a": ex.hyp_a,
                "hyp_b": ex.hyp_b,
                "label": ex.label,
                "primary_trial_id": ex.primary_trial_id,
                "secondary_trial_id": ex.secondary_trial_id,
                "section": ex.section,
                "source_uuids": list(ex.source_uuids),
            }
            for ex in examples
        ],
        "stats": stats,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False, indent=1)
        fh.write("\n")


def load_pair_data(path) -> tuple[list[PairExample], dict[str, TrialRecord], dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    trials = {}
    for tid, sections in doc["trials"].items():
        rec = TrialRecord(trial_id=tid, sections={k: list(v) for k, v in sections.items()})
        rec.validate()
        trials[tid] = rec
    examples = [
        PairExample(
            hyp_a=raw["hyp_a"],
            hyp_b=raw["hyp_b"],
            label=raw["label"],
            primary_trial_id=raw["primary_trial_id"],
            secondary_trial_id=raw.get("secondary_trial_id"),
            section=raw["section"],
            source_uuids=tuple(raw.get("source_uuids", ("", ""))),
        )
        for raw in doc["pairs"]
    ]
    return examples, trials, doc.get("stats", {})
