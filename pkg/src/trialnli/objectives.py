"""Training losses: entailment CE, retrieval CE, multitask mix, and the
CE + supervised-contrastive combination.

All functions run on tape tensors (numpy input is coerced), so they
serve both as training objectives and as the targets of the
finite-difference gradient suite. Probabilities are clamped to
[1e-12, 1 - 1e-12] before any log.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

PROB_EPS = 1e-12


@dataclass
class LossConfig:
    lam: float = 0.01  # multitask weight on the retrieval term
    gamma: float = 0.5  # CE share in the contrastive mix
    tau: float = 0.3  # contrastive temperature

    def validate(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    def to_json(self) -> dict:
        return {"lambda": self.lam, "gamma": self.gamma, "tau": self.tau}

    @classmethod
    def from_json(cls, doc: dict) -> "LossConfig":
        cfg = cls(lam=doc.get("lambda", 0.01), gamma=doc.get("gamma", 0.5), tau=doc.get("tau", 0.3))
        cfg.validate()
        return cfg


def loss_entailment(p_a, y: int) -> Tensor:
    """-(1-y) log p1 - y log p2 for one normalized 2-vector."""
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y!r}")
    p = ad.clip(ad.as_tensor(p_a), PROB_EPS, 1.0 - PROB_EPS)
    weights = np.array([1.0 - y, float(y)])
    return -ad.tsum(ad.mul(weights, ad.log(p)))


def loss_retrieval(p_b, r) -> Tensor:
    """Mean binary cross-entropy over the premise sentences."""
    p = ad.as_tensor(p_b)
    r = np.asarray(r, dtype=np.float64)
    if p.shape != r.shape or p.shape[0] == 0:
        raise ValueError(f"scores {p.shape} and labels {r.shape} must be equal-length and non-empty")
    p = ad.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    pos = ad.mul(r, ad.log(p))
    neg = ad.mul(1.0 - r, ad.log(ad.add(ad.mul(p, -1.0), 1.0)))
    return ad.mul(ad.tsum(ad.add(pos, neg)), -1.0 / p.shape[0])


def loss_multitask(l_a, l_b, cfg: LossConfig) -> Tensor:
    return ad.add(ad.as_tensor(l_a), ad.mul(ad.as_tensor(l_b), cfg.lam))


def supervised_contrastive(h_globals, y, cfg: LossConfig) -> Tensor:
    """Batch-level contrastive term over L2-normalized global vectors.

    For each anchor with at least one same-label partner:
        -1/(N_y - 1) * sum_{j != i, y_j = y_i}
            log( exp(h_i . h_j / tau) / sum_{k != i} exp(h_i . h_k / tau) )
    Anchors without a positive partner contribute nothing; a batch with
    no positive pair at all gives exactly zero.
    """
    h = h_globals if isinstance(h_globals, Tensor) else ad.concat([ad.as_tensor(v) for v in h_globals], axis=0)
    y = np.asarray(y, dtype=np.int64)
    n = h.shape[0]
    if n != y.shape[0]:
        raise ValueError("batch size mismatch between representations and labels")
    hn = ad.l2_normalize(h)
    sims = ad.mul(ad.matmul(hn, ad.transpose(hn, (1, 0))), 1.0 / cfg.tau)
    off_diag = 1.0 - np.eye(n)
    log_denom = ad.log(ad.tsum(ad.mul(ad.exp(sims), off_diag), axis=1, keepdims=True))
    log_ratio = ad.add(sims, ad.mul(log_denom, -1.0))
    same = (y[:, None] == y[None, :]).astype(np.float64) * off_diag
    counts = same.sum(axis=1)
    weights = np.zeros((n, n))
    has_pos = counts > 0
    weights[has_pos] = -same[has_pos] / counts[has_pos, None]
    return ad.tsum(ad.mul(log_ratio, weights))


def loss_contrastive(h_globals, y, p_as, cfg: LossConfig) -> Tensor:
    """gamma * mean entailment CE + (1 - gamma) * contrastive term."""
    y = np.asarray(y, dtype=np.int64)
    if y.shape[0] < 2:
        raise ValueError("contrastive loss needs a batch of at least 2")
    if len(p_as) != y.shape[0]:
        raise ValueError("predictions and labels must align")
    ce_terms = [loss_entailment(p, int(lbl)) for p, lbl in zip(p_as, y)]
    ce_mean = ad.mul(ad.tsum(ad.concat([ad.reshape(t, (1,)) for t in ce_terms], axis=0)), 1.0 / y.shape[0])
    scl = supervised_contrastive(h_globals, y, cfg)
    return ad.add(ad.mul(ce_mean, cfg.gamma), ad.mul(scl, 1.0 - cfg.gamma))
