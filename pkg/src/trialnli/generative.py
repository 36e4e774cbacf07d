"""Entailment scoring through conditional sequence probabilities.

A scorer assigns P(target text | input text); the entailment and
contradiction label words are scored separately and normalized into a
2-vector. Ships a deterministic stub for unit tests and a small
character-level encoder-decoder trainable on the synthetic corpus.
"""

from __future__ import annotations

import json
import os
import string
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .containers import load_container, save_container
from .corpus import Instance, PremiseView, TrialRecord, build_premise

ENTAILMENT_WORD = "entailment"
CONTRADICTION_WORD = "contradiction"


class UndefinedScoreError(ValueError):
    pass


@dataclass
class LabelScores:
    p_ent: float
    p_con: float


class SequenceScorer(Protocol):
    def score(self, input_text: str, target_text: str) -> float: ...


class StubScorer:
    """Fixed label-word probabilities regardless of input."""

    def __init__(self, p_ent: float, p_con: float):
        self.p_ent = p_ent
        self.p_con = p_con

    def score(self, input_text: str, target_text: str) -> float:
        if target_text == ENTAILMENT_WORD:
            return self.p_ent
        if target_text == CONTRADICTION_WORD:
            return self.p_con
        return 0.0


def format_input(hypothesis: str, premise: PremiseView) -> str:
    """Exact scoring template over the space-joined premise sentences."""
    if not hypothesis.strip():
        raise ValueError("empty hypothesis")
    return f"nli hypothesis: {hypothesis} premise: {' '.join(premise.sentences)}"


def normalize_entailment(scores: LabelScores | tuple[float, float]) -> np.ndarray:
    """Ratio-normalize the two label-word probabilities into (p1, p2)."""
    if isinstance(scores, LabelScores):
        p_ent, p_con = scores.p_ent, scores.p_con
    else:
        p_ent, p_con = scores
    if p_ent < 0 or p_con < 0:
        raise ValueError("label scores must be non-negative")
    total = p_ent + p_con
    if total == 0:
        raise UndefinedScoreError("both label-word probabilities are zero")
    return np.array([p_con / total, p_ent / total], dtype=np.float64)


def score_instance(scorer: SequenceScorer, inst: Instance, trials: dict[str, TrialRecord]) -> np.ndarray:
    premise = build_premise(inst, trials, task="A")
    text = format_input(inst.hypothesis, premise)
    try:
        p_ent = scorer.score(text, ENTAILMENT_WORD)
        p_con = scorer.score(text, CONTRADICTION_WORD)
    except Exception as e:
        raise RuntimeError(f"scorer failed on instance {inst.uuid!r}: {e}") from e
    return normalize_entailment(LabelScores(p_ent=p_ent, p_con=p_con))


# -- toy character-level encoder-decoder ----------------------------------

CHAR_PAD, CHAR_BOS, CHAR_EOS, CHAR_UNK = 0, 1, 2, 3
_CHARSET = " " + string.ascii_lowercase + string.digits + ".,:-%"
CHAR_VOCAB_SIZE = 4 + len(_CHARSET)
_CHAR_INDEX = {c: i + 4 for i, c in enumerate(_CHARSET)}

CONFIG_FILE = "config.json"
SCORER_FILE = "scorer.npz"


def _char_ids(text: str, limit: int | None = None) -> np.ndarray:
    ids = [_CHAR_INDEX.get(c, CHAR_UNK) for c in text.lower()]
    if limit is not None:
        ids = ids[:limit]
    return np.asarray(ids, dtype=np.int64)


class CharSeq2SeqScorer:
    """BiLSTM encoder + context-conditioned LSTM decoder over characters.

    The target probability is the teacher-forced product of per-character
    softmax probabilities including the end marker. Deterministic in
    eval mode.
    """

    def __init__(self, e: int = 24, h: int = 48, max_input_chars: int = 360, seed: int = 0):
        self.e = e
        self.h = h
        self.max_input_chars = max_input_chars
        rng = np.random.default_rng(seed)
        v = CHAR_VOCAB_SIZE

        def mat(shape, scale=0.1):
            return Tensor(rng.normal(0.0, scale, shape), requires_grad=True)

        def lstm_bias(hh):
            b = np.zeros(4 * hh)
            b[hh : 2 * hh] = 1.0
            return Tensor(b, requires_grad=True)

        self.params: dict[str, Tensor] = {
            "enc.emb": mat((v, e), 0.08),
            "enc.lstm.fwd.wx": mat((e, 4 * h)),
            "enc.lstm.fwd.wh": mat((h, 4 * h)),
            "enc.lstm.fwd.b": lstm_bias(h),
            "enc.lstm.rev.wx": mat((e, 4 * h)),
            "enc.lstm.rev.wh": mat((h, 4 * h)),
            "enc.lstm.rev.b": lstm_bias(h),
            "ctx.w": mat((2 * h, h), 0.08),
            "ctx.b": Tensor(np.zeros(h), requires_grad=True),
            "dec.emb": mat((v, e), 0.08),
            "dec.lstm.wx": mat((e + h, 4 * h)),
            "dec.lstm.wh": mat((h, 4 * h)),
            "dec.lstm.b": lstm_bias(h),
            "out.w": mat((h, v), 0.08),
            "out.b": Tensor(np.zeros(v), requires_grad=True),
        }

    def named_parameters(self):
        yield from self.params.items()

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def _context(self, input_ids: np.ndarray) -> Tensor:
        p = self.params
        x = ad.take_rows(p["enc.emb"], input_ids)
        fwd = ad.lstm(x, p["enc.lstm.fwd.wx"], p["enc.lstm.fwd.wh"], p["enc.lstm.fwd.b"])
        rev = ad.flip0(ad.lstm(ad.flip0(x), p["enc.lstm.rev.wx"], p["enc.lstm.rev.wh"], p["enc.lstm.rev.b"]))
        n = x.shape[0]
        ends = ad.concat([ad.take_rows(fwd, [n - 1]), ad.take_rows(rev, [0])], axis=1)
        return ad.tanh(ad.add(ad.matmul(ends, p["ctx.w"]), p["ctx.b"]))

    def target_log_prob(self, input_text: str, target_text: str) -> Tensor:
        """Tape-recorded log P(target | input), natural log."""
        p = self.params
        input_ids = _char_ids(input_text, self.max_input_chars)
        if input_ids.size == 0:
            raise ValueError("empty input text")
        target_ids = _char_ids(target_text)
        ctx = self._context(input_ids)
        dec_chars = np.concatenate([[CHAR_BOS], target_ids])
        gold = np.concatenate([target_ids, [CHAR_EOS]])
        emb = ad.take_rows(p["dec.emb"], dec_chars)
        steps = emb.shape[0]
        ctx_rows = ad.matmul(Tensor(np.ones((steps, 1))), ctx)
        dec_in = ad.concat([emb, ctx_rows], axis=1)
        hs = ad.lstm(dec_in, p["dec.lstm.wx"], p["dec.lstm.wh"], p["dec.lstm.b"])
        logits = ad.add(ad.matmul(hs, p["out.w"]), p["out.b"])
        probs = ad.softmax(logits, axis=-1)
        flat = ad.reshape(probs, (steps * CHAR_VOCAB_SIZE,))
        picks = ad.take_rows(flat, np.arange(steps) * CHAR_VOCAB_SIZE + gold)
        return ad.tsum(ad.log(ad.clip(picks, 1e-300, 1.0)))

    def score(self, input_text: str, target_text: str) -> float:
        with ad.no_grad():
            return float(np.exp(self.target_log_prob(input_text, target_text).item()))

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        meta = {"kind": "generative", "e": self.e, "h": self.h, "max_input_chars": self.max_input_chars}
        save_container(os.path.join(directory, SCORER_FILE), {k: t.data for k, t in self.params.items()}, meta)
        with open(os.path.join(directory, CONFIG_FILE), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, directory):
        arrays, meta = load_container(os.path.join(directory, SCORER_FILE))
        scorer = cls(e=meta["e"], h=meta["h"], max_input_chars=meta["max_input_chars"])
        for name in scorer.params:
            if name not in arrays:
                raise ValueError(f"scorer container missing array {name!r}")
            scorer.params[name] = Tensor(arrays[name], requires_grad=True)
        return scorer
