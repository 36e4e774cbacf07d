"""Micro precision/recall/F1 with per-section breakdowns.

Decisions are binary maps keyed however the caller likes (uuid for
entailment, (uuid, role, sentence) for retrieval); counts are pooled
over all keys before computing ratios. Zero-denominator conventions:
precision 0 when nothing was predicted positive, recall 0 when nothing
is gold positive, F1 0 when precision + recall is 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .corpus import SECTIONS, Instance, TrialRecord


class AlignmentError(ValueError):
    pass


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def add(self, pred: bool, gold: bool):
        if pred and gold:
            self.tp += 1
        elif pred and not gold:
            self.fp += 1
        elif not pred and gold:
            self.fn += 1
        else:
            self.tn += 1


@dataclass
class MetricReport:
    recall: float
    precision: float
    f1: float
    counts: ConfusionCounts
    per_section: dict[str, "MetricReport"] = field(default_factory=dict)

    def to_json(self) -> dict:
        doc = {
            "recall": self.recall,
            "precision": self.precision,
            "f1": self.f1,
            "counts": {"tp": self.counts.tp, "fp": self.counts.fp, "fn": self.counts.fn, "tn": self.counts.tn},
        }
        if self.per_section:
            doc["per_section"] = {k: v.to_json() for k, v in self.per_section.items()}
        return doc


def prf_from_counts(c: ConfusionCounts) -> MetricReport:
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricReport(recall=recall, precision=precision, f1=f1, counts=c)


def micro_prf(pred: dict, gold: dict) -> MetricReport:
    """Pooled counts over aligned binary decision maps."""
    for key in pred:
        if key not in gold:
            raise AlignmentError(f"prediction key {key!r} missing from gold")
    for key in gold:
        if key not in pred:
            raise AlignmentError(f"gold key {key!r} missing from predictions")
    counts = ConfusionCounts()
    for key, decided in pred.items():
        counts.add(bool(decided), bool(gold[key]))
    return prf_from_counts(counts)


def _key_uuid(key) -> str:
    return key[0] if isinstance(key, tuple) else key


def per_section_report(pred: dict, gold: dict, instances: list[Instance]) -> MetricReport:
    """Global report plus micro_prf restricted to each section."""
    section_of = {}
    for inst in instances:
        if inst.section not in SECTIONS:
            raise ValueError(f"instance {inst.uuid!r} carries unknown section {inst.section!r}")
        section_of[inst.uuid] = inst.section
    report = micro_prf(pred, gold)
    for section in SECTIONS:
        keys = [k for k in pred if section_of.get(_key_uuid(k)) == section]
        if not keys:
            continue
        report.per_section[section] = micro_prf({k: pred[k] for k in keys}, {k: gold[k] for k in keys})
    return report


# -- decision-map builders -------------------------------------------------


def entailment_decisions(labels: dict[str, str]) -> dict[str, bool]:
    return {uuid: label == "Entailment" for uuid, label in labels.items()}


def gold_entailment_decisions(instances: list[Instance]) -> dict[str, bool]:
    out = {}
    for inst in instances:
        if inst.label is None:
            raise ValueError(f"instance {inst.uuid!r} has no gold label")
        out[inst.uuid] = inst.label == "Entailment"
    return out


def retrieval_decisions(selected: dict[str, dict]) -> dict[tuple, bool]:
    """Flatten {uuid: {role: {"scores": [...], "selected": [...]}}} decisions."""
    out = {}
    for uuid, roles in selected.items():
        for role, payload in roles.items():
            chosen = set(payload["selected"])
            for idx in range(len(payload["scores"])):
                out[(uuid, role, idx)] = idx in chosen
    return out


def gold_retrieval_decisions(instances: list[Instance], trials: dict[str, TrialRecord]) -> dict[tuple, bool]:
    out = {}
    for inst in instances:
        roles = [("primary", inst.primary_trial_id, inst.primary_evidence)]
        if inst.secondary_trial_id is not None:
            roles.append(("secondary", inst.secondary_trial_id, inst.secondary_evidence))
        for role, tid, evidence in roles:
            gold = set(evidence or [])
            m = len(trials[tid].sections[inst.section])
            for idx in range(m):
                out[(inst.uuid, role, idx)] = idx in gold
    return out


# -- rendering --------------------------------------------------------------


def render_text_table(reports: dict[str, MetricReport]) -> str:
    """Rows of named reports with the per-section columns when present."""
    lines = []
    header = f"{'system':<28} {'recall':>8} {'precision':>10} {'f1':>8}"
    sec_cols = any(r.per_section for r in reports.values())
    if sec_cols:
        header += "".join(f" {abbr:>8}" for abbr in ("Int", "Elig", "Res", "AE"))
    lines.append(header)
    lines.append("-" * len(header))
    for name, rep in reports.items():
        row = f"{name:<28} {rep.recall:>8.3f} {rep.precision:>10.3f} {rep.f1:>8.3f}"
        if sec_cols:
            for section in SECTIONS:
                sub = rep.per_section.get(section)
                row += f" {sub.f1:>8.3f}" if sub else f" {'-':>8}"
        lines.append(row)
    return "\n".join(lines)


def write_report(report: MetricReport, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=1, sort_keys=True)
        fh.write("\n")
