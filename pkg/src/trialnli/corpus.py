"""Dataset schema, premise construction, tokenized pairs and fold plans.

Canonical file format (UTF-8 JSON, evidence indices 0-based):

    {"trials": {trial_id: {"Intervention": [...], "Eligibility": [...],
                           "Results": [...], "Adverse Events": [...]}},
     "instances": [{"uuid", "kind", "section", "hypothesis",
                    "primary_trial_id", "secondary_trial_id"?, "label"?,
                    "primary_evidence"?, "secondary_evidence"?}]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

SECTIONS = ("Intervention", "Eligibility", "Results", "Adverse Events")
KINDS = ("Single", "Comparison")
LABELS = ("Entailment", "Contradiction")

PRIMARY_MARKER = "primary trial:"
SECONDARY_MARKER = "secondary trial:"

# origin index used for marker sentences, which belong to no trial sentence
MARKER_INDEX = -1


class DatasetParseError(ValueError):
    pass


class DatasetValidationError(ValueError):
    pass


class UnencodableInstanceError(ValueError):
    pass


@dataclass
class TrialRecord:
    """One clinical-trial-style report: four named sentence lists."""

    trial_id: str
    sections: dict[str, list[str]]

    def validate(self):
        missing = [s for s in SECTIONS if s not in self.sections]
        if missing:
            raise DatasetValidationError(f"trial {self.trial_id!r} missing sections {missing}")
        unknown = [s for s in self.sections if s not in SECTIONS]
        if unknown:
            raise DatasetValidationError(f"trial {self.trial_id!r} has unknown sections {unknown}")
        for name, sents in self.sections.items():
            for i, s in enumerate(sents):
                if not s.strip():
                    raise DatasetValidationError(f"trial {self.trial_id!r} section {name!r} sentence {i} is empty")


@dataclass
class Instance:
    """One hypothesis with its premise references and optional gold data."""

    uuid: str
    kind: str
    section: str
    hypothesis: str
    primary_trial_id: str
    secondary_trial_id: str | None = None
    label: str | None = None
    primary_evidence: list[int] | None = None
    secondary_evidence: list[int] | None = None

    def validate(self, trials: dict[str, TrialRecord] | None = None):
        if self.kind not in KINDS:
            raise DatasetValidationError(f"instance {self.uuid!r}: unknown kind {self.kind!r}")
        if self.section not in SECTIONS:
            raise DatasetValidationError(f"instance {self.uuid!r}: unknown section {self.section!r}")
        if self.label is not None and self.label not in LABELS:
            raise DatasetValidationError(f"instance {self.uuid!r}: unknown label {self.label!r}")
        if (self.secondary_trial_id is not None) != (self.kind == "Comparison"):
            raise DatasetValidationError(
                f"instance {self.uuid!r}: secondary_trial_id must be present exactly for Comparison instances"
            )
        if not self.hypothesis.strip():
            raise DatasetValidationError(f"instance {self.uuid!r}: empty hypothesis")
        if trials is not None:
            self._validate_refs(trials)

    def _validate_refs(self, trials: dict[str, TrialRecord]):
        for role, tid, ev in (
            ("primary", self.primary_trial_id, self.primary_evidence),
            ("secondary", self.secondary_trial_id, self.secondary_evidence),
        ):
            if tid is None:
                if ev:
                    raise DatasetValidationError(f"instance {self.uuid!r}: {role} evidence without a {role} trial")
                continue
            if tid not in trials:
                raise DatasetValidationError(f"instance {self.uuid!r} references absent trial id {tid!r}")
            n = len(trials[tid].sections[self.section])
            for idx in ev or []:
                if not 0 <= idx < n:
                    raise DatasetValidationError(
                        f"instance {self.uuid!r}: {role} evidence index {idx} out of range for "
                        f"trial {tid!r} section {self.section!r} ({n} sentences)"
                    )


@dataclass
class PremiseView:
    """Ordered premise sentences plus their provenance."""

    sentences: list[str]
    origins: list[tuple[str, str, int]]

    def __post_init__(self):
        if len(self.sentences) != len(self.origins):
            raise ValueError("sentences and origins must be parallel")
        if not self.sentences:
            raise ValueError("premise must contain at least one sentence")

    @property
    def m(self) -> int:
        return len(self.sentences)

    def marker_positions(self) -> list[int]:
        return [i for i, (_, _, idx) in enumerate(self.origins) if idx == MARKER_INDEX]


@dataclass
class TokenSequence:
    """[CLS] S [SEP] P [SEP] token ids with per-sentence index spans.

    ``spans[0]`` covers the hypothesis, ``spans[i]`` the i-th premise
    sentence; dropped sentences have empty spans and appear in
    ``truncated`` (as do partially kept ones).
    """

    token_ids: np.ndarray
    spans: list[np.ndarray]
    truncated: tuple[int, ...] = ()

    @property
    def n_tokens(self) -> int:
        return int(self.token_ids.shape[0])

    @property
    def n_premise_sentences(self) -> int:
        return len(self.spans) - 1

    @property
    def n_special(self) -> int:
        return self.n_tokens - sum(len(s) for s in self.spans)


@dataclass
class FoldPlan:
    k: int
    assignment: dict[str, int] = field(default_factory=dict)

    def fold_of(self, uuid: str) -> int:
        return self.assignment[uuid]

    def members(self, fold: int) -> list[str]:
        return [u for u, f in self.assignment.items() if f == fold]


# -- ingestion ----------------------------------------------------------


def load_dataset(path) -> tuple[list[Instance], dict[str, TrialRecord]]:
    """Read and validate the canonical JSON file."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise DatasetParseError(f"{path}: malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    return parse_dataset(doc)


def parse_dataset(doc: dict) -> tuple[list[Instance], dict[str, TrialRecord]]:
    if not isinstance(doc, dict) or "trials" not in doc or "instances" not in doc:
        raise DatasetValidationError("document must contain 'trials' and 'instances'")
    trials = {}
    for tid, sections in doc["trials"].items():
        rec = TrialRecord(trial_id=tid, sections={k: list(v) for k, v in sections.items()})
        rec.validate()
        trials[tid] = rec
    instances = []
    seen = set()
    for raw in doc["instances"]:
        inst = Instance(
            uuid=raw["uuid"],
            kind=raw["kind"],
            section=raw["section"],
            hypothesis=raw["hypothesis"],
            primary_trial_id=raw["primary_trial_id"],
            secondary_trial_id=raw.get("secondary_trial_id"),
            label=raw.get("label"),
            primary_evidence=list(raw["primary_evidence"]) if raw.get("primary_evidence") is not None else None,
            secondary_evidence=list(raw["secondary_evidence"]) if raw.get("secondary_evidence") is not None else None,
        )
        if inst.uuid in seen:
            raise DatasetValidationError(f"duplicate instance uuid {inst.uuid!r}")
        seen.add(inst.uuid)
        inst.validate(trials)
        instances.append(inst)
    return instances, trials


def dataset_to_doc(instances: list[Instance], trials: dict[str, TrialRecord]) -> dict:
    doc = {"trials": {tid: dict(rec.sections) for tid, rec in trials.items()}, "instances": []}
    for inst in instances:
        raw = {
            "uuid": inst.uuid,
            "kind": inst.kind,
            "section": inst.section,
            "hypothesis": inst.hypothesis,
            "primary_trial_id": inst.primary_trial_id,
        }
        if inst.secondary_trial_id is not None:
            raw["secondary_trial_id"] = inst.secondary_trial_id
        if inst.label is not None:
            raw["label"] = inst.label
        if inst.primary_evidence is not None:
            raw["primary_evidence"] = list(inst.primary_evidence)
        if inst.secondary_evidence is not None:
            raw["secondary_evidence"] = list(inst.secondary_evidence)
        doc["instances"].append(raw)
    return doc


def save_dataset(instances: list[Instance], trials: dict[str, TrialRecord], path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataset_to_doc(instances, trials), fh, ensure_ascii=False, indent=1)
        fh.write("\n")


# -- premise construction ------------------------------------------------


def _section_view(trials: dict[str, TrialRecord], tid: str, section: str) -> PremiseView:
    if tid not in trials:
        raise DatasetValidationError(f"unknown trial id {tid!r}")
    sents = trials[tid].sections[section]
    if not sents:
        raise DatasetValidationError(f"trial {tid!r} section {section!r} is empty")
    return PremiseView(sentences=list(sents), origins=[(tid, section, i) for i in range(len(sents))])


def build_premise(inst: Instance, trials: dict[str, TrialRecord], task: str):
    """Assemble the premise for one instance.

    Single instances give one view for either task. Comparison
    instances give a single concatenated view with ``primary trial:`` /
    ``secondary trial:`` marker sentences for the entailment task, and
    a (primary, secondary) pair of views for the retrieval task, which
    scores each report separately.
    """
    if task not in ("A", "B"):
        raise ValueError(f"task must be 'A' or 'B', got {task!r}")
    primary = _section_view(trials, inst.primary_trial_id, inst.section)
    if inst.kind == "Single":
        return primary
    secondary = _section_view(trials, inst.secondary_trial_id, inst.section)
    if task == "B":
        return primary, secondary
    sentences = [PRIMARY_MARKER] + primary.sentences + [SECONDARY_MARKER] + secondary.sentences
    origins = (
        [(inst.primary_trial_id, inst.section, MARKER_INDEX)]
        + primary.origins
        + [(inst.secondary_trial_id, inst.section, MARKER_INDEX)]
        + secondary.origins
    )
    return PremiseView(sentences=sentences, origins=origins)


def evidence_labels(inst: Instance, premise: PremiseView) -> np.ndarray:
    """Per-sentence 0/1 retrieval labels aligned with ``premise``.

    Markers are fixed to 0. Origins carry trial provenance, so the same
    code labels single views, per-report views and the concatenated
    comparison view.
    """
    gold = {
        (inst.primary_trial_id, idx) for idx in (inst.primary_evidence or [])
    } | {
        (inst.secondary_trial_id, idx) for idx in (inst.secondary_evidence or []) if inst.secondary_trial_id
    }
    r = np.zeros(premise.m, dtype=np.float64)
    for i, (tid, _, idx) in enumerate(premise.origins):
        if idx != MARKER_INDEX and (tid, idx) in gold:
            r[i] = 1.0
    return r


# -- tokenized pair assembly ---------------------------------------------


def encode_pair(hypothesis: str, premise: PremiseView, vocab, max_len: int) -> TokenSequence:
    """Build [CLS] S [SEP] P [SEP] with per-sentence spans.

    When the pair exceeds ``max_len`` the premise is truncated from the
    tail at token granularity; the hypothesis is never cut. Sentences
    losing any token are flagged, fully dropped ones get empty spans.
    """
    hyp_ids = vocab.encode(hypothesis)
    if not hyp_ids:
        raise UnencodableInstanceError("hypothesis has no tokens")
    if len(hyp_ids) + 3 > max_len:
        raise UnencodableInstanceError(
            f"hypothesis needs {len(hyp_ids) + 3} tokens with markers, exceeding max_len={max_len}"
        )
    budget = max_len - len(hyp_ids) - 3
    ids = [vocab.cls_id] + hyp_ids + [vocab.sep_id]
    spans = [np.arange(1, 1 + len(hyp_ids), dtype=np.int64)]
    truncated = []
    pos = len(ids)
    for si, sent in enumerate(premise.sentences):
        sent_ids = vocab.encode(sent)
        keep = min(len(sent_ids), budget)
        if keep < len(sent_ids):
            truncated.append(si)
        ids.extend(sent_ids[:keep])
        spans.append(np.arange(pos, pos + keep, dtype=np.int64))
        pos += keep
        budget -= keep
    ids.append(vocab.sep_id)
    return TokenSequence(token_ids=np.asarray(ids, dtype=np.int64), spans=spans, truncated=tuple(truncated))


# -- fold planning --------------------------------------------------------


def split_folds(instances: list[Instance], k: int, seed: int) -> FoldPlan:
    """Deterministic label-stratified assignment with sizes differing by at most 1."""
    if k < 2:
        raise ValueError(f"fold count must be at least 2, got {k}")
    if k > len(instances):
        raise ValueError(f"cannot split {len(instances)} instances into {k} folds")
    rng = np.random.default_rng(seed)
    by_label: dict[str | None, list[str]] = {}
    for inst in instances:
        by_label.setdefault(inst.label, []).append(inst.uuid)
    plan = FoldPlan(k=k)
    counter = 0
    for label in sorted(by_label, key=lambda x: (x is None, x)):
        uuids = by_label[label]
        order = rng.permutation(len(uuids))
        for j in order:
            plan.assignment[uuids[j]] = counter % k
            counter += 1
    return plan
