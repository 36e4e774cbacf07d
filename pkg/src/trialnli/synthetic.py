"""Synthetic trial-report corpus with labels known by construction.

Instances are generated in pairs of mutually exclusive hypotheses over
a fresh premise, so every premise carries a contradicting pair (the
material the pairwise-consistency network trains on) and labels are
balanced at 50%. Eight template families mix lexical polarity cues with
numeric facts (counts, sums, thresholds); evidence indices point at the
sentences each hypothesis is about.
"""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass, field

import numpy as np

from .corpus import Instance, TrialRecord

SYMPTOMS = (
    "nausea", "headache", "fatigue", "anemia", "vomiting", "dizziness",
    "rash", "fever", "neutropenia", "insomnia", "diarrhea", "cough",
)
DRUGS = (
    "letrozole", "anastrozole", "tamoxifen", "paclitaxel", "capecitabine",
    "ribociclib", "fulvestrant", "exemestane",
)
THERAPIES = ("chemotherapy", "radiotherapy", "immunotherapy", "surgery")
CONDITIONS = ("metastatic", "invasive", "localized", "operable")

_SENTENCE_TEMPLATES = (
    "participants received {dose} mg of {drug} once daily.",
    "treatment continued for {weeks} weeks.",
    "{comparator} was administered as a comparator.",
    "the regimen was given without a comparator.",
    "patients must be at least {age} years old.",
    "prior {therapy} is not allowed.",
    "prior {therapy} is permitted.",
    "a confirmed diagnosis of {condition} breast cancer is required.",
    "cohort 1 enrolled {n} patients.",
    "cohort 2 enrolled {n} patients.",
    "the median follow up was {months} months.",
    "{n} patients discontinued the study early.",
    "{symptom} was reported in {n} patients.",
    "no cases of {symptom} were observed.",
)

# adverse-events filler carries no polarity or symptom words
_AE_FILLERS = (
    "most adverse events were mild in severity.",
    "safety data were collected for all participants.",
    "laboratory values remained stable during treatment.",
    "the safety profile was consistent with prior reports.",
    "routine monitoring continued through the follow up period.",
)

_HYPOTHESIS_TEMPLATES = (
    "{symptom} was reported among the patients.",
    "no patients experienced {symptom} during the study.",
    "patients with prior {therapy} are excluded from the trial.",
    "patients who received prior {therapy} remain eligible for the trial.",
    "the study treatment was {drug}.",
    "more than {n} patients experienced {symptom}.",
    "at most {n} patients experienced {symptom}.",
    "a total of {n} patients were enrolled across the two cohorts.",
    "enrollment required a minimum age of {age} years.",
    "patients as young as {age} years were allowed to enroll.",
    "{symptom} was reported in both the primary trial and the secondary trial.",
    "{symptom} was reported in the secondary trial but not in the primary trial.",
    "the primary trial enrolled more patients than the secondary trial.",
    "the primary trial enrolled fewer patients than the secondary trial.",
)

_SYNONYMS = {
    "patients": "participants",
    "reported": "recorded",
    "experienced": "developed",
    "received": "underwent",
    "enrolled": "recruited",
    "observed": "noted",
    "during": "throughout",
    "remain": "stay",
    "allowed": "permitted",
}

_PARAPHRASE_PREFIX = "in summary,"


def _collect_lexicon() -> tuple[str, ...]:
    words: set[str] = set()
    for tpl in _SENTENCE_TEMPLATES + _AE_FILLERS + _HYPOTHESIS_TEMPLATES:
        words.update(re.findall(r"[a-z]+", re.sub(r"\{[a-z_]+\}", " ", tpl)))
    for group in (SYMPTOMS, DRUGS, THERAPIES, CONDITIONS):
        words.update(group)
    words.update(_SYNONYMS.values())
    words.update(re.findall(r"[a-z]+", _PARAPHRASE_PREFIX))
    words.update(("primary", "secondary", "trial"))
    return tuple(sorted(words))


TEMPLATE_LEXICON = _collect_lexicon()


@dataclass
class SynthConfig:
    """Family mix for the generator; weights are renormalized."""

    family_weights: dict[str, float] = field(
        default_factory=lambda: {
            "ae_presence": 0.22,
            "eligibility_therapy": 0.18,
            "intervention_drug": 0.20,
            "ae_threshold": 0.08,
            "results_total": 0.05,
            "eligibility_age": 0.09,
            "cmp_ae": 0.15,
            "cmp_enrollment": 0.03,
        }
    )


@dataclass
class _Facts:
    cohort_a: int
    cohort_b: int
    followup: int
    discontinued: int
    symptom: str
    symptom_count: int  # 0 means "no cases"
    ae_slot: int  # position of the symptom sentence among the fillers
    ae_fillers: tuple[str, str]
    drug: str
    dose: int
    weeks: int
    comparator: str | None
    min_age: int
    therapy: str
    therapy_allowed: bool
    condition: str


def _sample_facts(rng: np.random.Generator) -> _Facts:
    drug = DRUGS[rng.integers(len(DRUGS))]
    comparator = None
    if rng.random() < 0.5:
        others = [d for d in DRUGS if d != drug]
        comparator = others[rng.integers(len(others))]
    fillers = rng.choice(len(_AE_FILLERS), size=2, replace=False)
    return _Facts(
        cohort_a=int(rng.integers(10, 41)),
        cohort_b=int(rng.integers(10, 41)),
        followup=int(rng.integers(6, 49)),
        discontinued=int(rng.integers(1, 10)),
        symptom=SYMPTOMS[rng.integers(len(SYMPTOMS))],
        symptom_count=int(rng.integers(2, 20)) if rng.random() < 0.55 else 0,
        ae_slot=int(rng.integers(3)),
        ae_fillers=(_AE_FILLERS[fillers[0]], _AE_FILLERS[fillers[1]]),
        drug=drug,
        dose=int(rng.integers(1, 40)) * 5,
        weeks=int(rng.integers(4, 53)),
        comparator=comparator,
        min_age=int(rng.integers(18, 76)),
        therapy=THERAPIES[rng.integers(len(THERAPIES))],
        therapy_allowed=bool(rng.random() < 0.5),
        condition=CONDITIONS[rng.integers(len(CONDITIONS))],
    )


def _render_trial(tid: str, f: _Facts) -> TrialRecord:
    intervention = [
        f"participants received {f.dose} mg of {f.drug} once daily.",
        f"treatment continued for {f.weeks} weeks.",
        f"{f.comparator} was administered as a comparator." if f.comparator else "the regimen was given without a comparator.",
    ]
    eligibility = [
        f"patients must be at least {f.min_age} years old.",
        f"prior {f.therapy} is permitted." if f.therapy_allowed else f"prior {f.therapy} is not allowed.",
        f"a confirmed diagnosis of {f.condition} breast cancer is required.",
    ]
    results = [
        f"cohort 1 enrolled {f.cohort_a} patients.",
        f"cohort 2 enrolled {f.cohort_b} patients.",
        f"the median follow up was {f.followup} months.",
        f"{f.discontinued} patients discontinued the study early.",
    ]
    status = (
        f"{f.symptom} was reported in {f.symptom_count} patients."
        if f.symptom_count > 0
        else f"no cases of {f.symptom} were observed."
    )
    adverse = list(f.ae_fillers)
    adverse.insert(f.ae_slot, status)
    return TrialRecord(
        trial_id=tid,
        sections={
            "Intervention": intervention,
            "Eligibility": eligibility,
            "Results": results,
            "Adverse Events": adverse,
        },
    )


def _label(truth: bool) -> str:
    return "Entailment" if truth else "Contradiction"


# Each family builds one premise worth of facts and returns the pair of
# mutually exclusive hypotheses: (section, [(hyp, label, prim_ev, sec_ev)]).


def _fam_ae_presence(rng, f: _Facts, _g):
    reported = f.symptom_count > 0
    return "Adverse Events", [
        (f"{f.symptom} was reported among the patients.", _label(reported), [f.ae_slot], None),
        (f"no patients experienced {f.symptom} during the study.", _label(not reported), [f.ae_slot], None),
    ]


def _fam_eligibility_therapy(rng, f: _Facts, _g):
    return "Eligibility", [
        (f"patients with prior {f.therapy} are excluded from the trial.", _label(not f.therapy_allowed), [1], None),
        (f"patients who received prior {f.therapy} remain eligible for the trial.", _label(f.therapy_allowed), [1], None),
    ]


def _fam_intervention_drug(rng, f: _Facts, _g):
    # keep the premise single-drug so the match is unambiguous
    f.comparator = None
    others = [d for d in DRUGS if d != f.drug]
    wrong = others[rng.integers(len(others))]
    pair = [
        (f"the study treatment was {f.drug}.", "Entailment", [0], None),
        (f"the study treatment was {wrong}.", "Contradiction", [0], None),
    ]
    if rng.random() < 0.5:
        pair.reverse()
    return "Intervention", pair


def _fam_ae_threshold(rng, f: _Facts, _g):
    # count kept well clear of the round threshold so magnitude decides
    t = (5, 10, 20)[rng.integers(3)]
    above = bool(rng.random() < 0.5)
    f.symptom_count = t + int(rng.integers(2, 10)) if above else max(1, t - int(rng.integers(2, 5)))
    return "Adverse Events", [
        (f"more than {t} patients experienced {f.symptom}.", _label(above), [f.ae_slot], None),
        (f"at most {t} patients experienced {f.symptom}.", _label(not above), [f.ae_slot], None),
    ]


def _fam_results_total(rng, f: _Facts, _g):
    total = f.cohort_a + f.cohort_b
    wrong = total + int(rng.integers(1, 6)) * (1 if rng.random() < 0.5 else -1)
    pair = [
        (f"a total of {total} patients were enrolled across the two cohorts.", "Entailment", [0, 1], None),
        (f"a total of {wrong} patients were enrolled across the two cohorts.", "Contradiction", [0, 1], None),
    ]
    if rng.random() < 0.5:
        pair.reverse()
    return "Results", pair


def _fam_eligibility_age(rng, f: _Facts, _g):
    younger = f.min_age - int(rng.integers(1, 8))
    pair = [
        (f"enrollment required a minimum age of {f.min_age} years.", "Entailment", [0], None),
        (f"patients as young as {younger} years were allowed to enroll.", "Contradiction", [0], None),
    ]
    if rng.random() < 0.5:
        pair.reverse()
    return "Eligibility", pair


def _fam_cmp_ae(rng, f: _Facts, g: _Facts):
    name = SYMPTOMS[rng.integers(len(SYMPTOMS))]
    both = bool(rng.random() < 0.5)
    # the same symptom is tracked in both reports; its status decides
    f.symptom = g.symptom = name
    f.symptom_count = int(rng.integers(2, 20)) if both else 0
    g.symptom_count = int(rng.integers(2, 20))
    return "Adverse Events", [
        (
            f"{name} was reported in both the primary trial and the secondary trial.",
            _label(both), [f.ae_slot], [g.ae_slot],
        ),
        (
            f"{name} was reported in the secondary trial but not in the primary trial.",
            _label(not both), [f.ae_slot], [g.ae_slot],
        ),
    ]


def _fam_cmp_enrollment(rng, f: _Facts, g: _Facts):
    while f.cohort_a + f.cohort_b == g.cohort_a + g.cohort_b:
        g.cohort_b = int(rng.integers(10, 41))
    more = (f.cohort_a + f.cohort_b) > (g.cohort_a + g.cohort_b)
    return "Results", [
        ("the primary trial enrolled more patients than the secondary trial.", _label(more), [0, 1], [0, 1]),
        ("the primary trial enrolled fewer patients than the secondary trial.", _label(not more), [0, 1], [0, 1]),
    ]


_FAMILIES = {
    "ae_presence": (_fam_ae_presence, False),
    "eligibility_therapy": (_fam_eligibility_therapy, False),
    "intervention_drug": (_fam_intervention_drug, False),
    "ae_threshold": (_fam_ae_threshold, False),
    "results_total": (_fam_results_total, False),
    "eligibility_age": (_fam_eligibility_age, False),
    "cmp_ae": (_fam_cmp_ae, True),
    "cmp_enrollment": (_fam_cmp_enrollment, True),
}


def generate_synthetic(seed: int, n: int, config: SynthConfig | None = None):
    """Deterministically generate ``n`` instances and their trials.

    Hypotheses come in mutually exclusive pairs sharing a premise; for
    odd ``n`` (n >= 3) the final premise carries three hypotheses so the
    pair-coverage guarantee still holds. n == 1 cannot satisfy pair
    coverage and yields a lone instance.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    config = config or SynthConfig()
    names = sorted(config.family_weights)
    weights = np.array([config.family_weights[k] for k in names], dtype=np.float64)
    if weights.sum() <= 0:
        raise ValueError("family weights must have positive mass")
    weights = weights / weights.sum()

    rng = np.random.default_rng(seed)
    instances: list[Instance] = []
    trials: dict[str, TrialRecord] = {}
    serial = 0
    while len(instances) < n:
        fam_name = names[rng.choice(len(names), p=weights)]
        builder, is_comparison = _FAMILIES[fam_name]
        facts_a = _sample_facts(rng)
        facts_b = _sample_facts(rng) if is_comparison else None
        section, pair = builder(rng, facts_a, facts_b)

        tid_a = f"NCT{serial:05d}"
        serial += 1
        trials[tid_a] = _render_trial(tid_a, facts_a)
        tid_b = None
        if is_comparison:
            tid_b = f"NCT{serial:05d}"
            serial += 1
            trials[tid_b] = _render_trial(tid_b, facts_b)

        remaining = n - len(instances)
        if remaining == 3:
            # absorb the odd tail: duplicate-polarity third hypothesis
            extra = pair[int(rng.integers(2))]
            pair = list(pair) + [extra]
        for hyp, label, prim_ev, sec_ev in pair[: min(len(pair), remaining)]:
            instances.append(
                Instance(
                    uuid=f"synth-{len(instances):05d}",
                    kind="Comparison" if is_comparison else "Single",
                    section=section,
                    hypothesis=hyp,
                    primary_trial_id=tid_a,
                    secondary_trial_id=tid_b,
                    label=label,
                    primary_evidence=list(prim_ev) if prim_ev is not None else None,
                    secondary_evidence=list(sec_ev) if sec_ev is not None else None,
                )
            )
    return instances, trials


# -- paraphrase providers -------------------------------------------------


class IdentityParaphraser:
    """Degenerate provider: S' == S."""

    def paraphrase(self, text: str) -> str:
        return text


class RuleParaphraser:
    """Label-preserving synonym substitution over the template lexicon.

    Polarity words (no, not, more, fewer, at, most) are never touched.
    Deterministic given (seed, text).
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def paraphrase(self, text: str) -> str:
        local = np.random.default_rng((self.seed * 1000003 + zlib.crc32(text.encode())) % (2**63))
        out = text
        changed = False
        for word, rep in _SYNONYMS.items():
            if re.search(rf"\b{word}\b", out) and local.random() < 0.8:
                out = re.sub(rf"\b{word}\b", rep, out)
                changed = True
        if not changed:
            out = f"{_PARAPHRASE_PREFIX} {out}"
        return out
