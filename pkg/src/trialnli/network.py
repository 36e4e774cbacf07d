"""Multi-granularity inference network.

One shared encoder pass feeds two granularities: max-pooled sentence
rows run through a contextual sentence encoder (BiLSTM or transformer)
for the entailment head, while each premise sentence is re-encoded
against the hypothesis at token level (BiLSTM or max-pooling) for the
per-sentence evidence head.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .containers import load_container, save_container
from .corpus import TokenSequence
from .encoder import EncoderParams, embed_and_encode, export_parameters, import_parameters, transformer_layer

LSTM_INIT_SCALE = 0.1
HEAD_INIT_SCALE = 0.02

SENTENCE_ENCODERS = ("bilstm", "transformer")
TOKEN_ENCODERS = ("bilstm", "maxpool")
POOLINGS = ("max", "mean")


class DegenerateInputError(ValueError):
    pass


@dataclass
class NetworkConfig:
    sentence_encoder: str = "bilstm"
    token_encoder: str = "bilstm"
    d: int = 32
    l_s: int = 1
    n_heads: int = 4
    d_ff: int = 64
    max_sentences: int = 64
    dropout: float = 0.1
    pooling: str = "max"

    def validate(self):
        if self.sentence_encoder not in SENTENCE_ENCODERS:
            raise ValueError(f"unknown sentence encoder {self.sentence_encoder!r}")
        if self.token_encoder not in TOKEN_ENCODERS:
            raise ValueError(f"unknown token encoder {self.token_encoder!r}")
        if self.pooling not in POOLINGS:
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if self.d % self.n_heads != 0:
            raise ValueError(f"d={self.d} not divisible by n_heads={self.n_heads}")


def _lstm_params(rng, d: int, prefix: str, out: dict[str, Tensor]):
    for direction in ("fwd", "rev"):
        out[f"{prefix}.{direction}.wx"] = Tensor(rng.normal(0.0, LSTM_INIT_SCALE, (d, 4 * d)), requires_grad=True)
        out[f"{prefix}.{direction}.wh"] = Tensor(rng.normal(0.0, LSTM_INIT_SCALE, (d, 4 * d)), requires_grad=True)
        b = np.zeros(4 * d)
        b[d : 2 * d] = 1.0  # forget-gate bias opens the memory path at init
        out[f"{prefix}.{direction}.b"] = Tensor(b, requires_grad=True)


def init_network_params(cfg: NetworkConfig, seed: int) -> dict[str, Tensor]:
    cfg.validate()
    rng = np.random.default_rng(seed)
    d = cfg.d
    params: dict[str, Tensor] = {}
    if cfg.sentence_encoder == "bilstm":
        _lstm_params(rng, d, "sent.lstm", params)
        params["sent.w1"] = Tensor(rng.normal(0.0, HEAD_INIT_SCALE, (2 * d, d)), requires_grad=True)
        params["sent.b1"] = Tensor(np.zeros(d), requires_grad=True)
        params["sent.w2"] = Tensor(rng.normal(0.0, HEAD_INIT_SCALE, (2 * d, d)), requires_grad=True)
        params["sent.b2"] = Tensor(np.zeros(d), requires_grad=True)
    else:
        params["sent.pos"] = Tensor(rng.normal(0.0, HEAD_INIT_SCALE, (cfg.max_sentences, d)), requires_grad=True)
        from .encoder import _init_layer

        for layer in range(cfg.l_s):
            _init_layer(rng, d, cfg.d_ff, f"sent.layer{layer:02d}", params)
    if cfg.token_encoder == "bilstm":
        _lstm_params(rng, d, "tok.lstm", params)
        params["tok.w3"] = Tensor(rng.normal(0.0, HEAD_INIT_SCALE, (2 * d, d)), requires_grad=True)
        params["tok.b3"] = Tensor(np.zeros(d), requires_grad=True)
    params["clsA.w1"] = Tensor(rng.normal(0.0, HEAD_INIT_SCALE, (d, d)), requires_grad=True)
    params["clsA.b1"] = Tensor(np.zeros(d), requires_grad=True)
    params["clsA.w2"] = Tensor(rng.normal(0.0, HEAD_INIT_SCALE, (d, 2)), requires_grad=True)
    params["clsA.b2"] = Tensor(np.zeros(2), requires_grad=True)
    params["clsB.w"] = Tensor(rng.normal(0.0, HEAD_INIT_SCALE, (2 * d, 1)), requires_grad=True)
    params["clsB.b"] = Tensor(np.zeros(1), requires_grad=True)
    return params


# -- granular pieces ------------------------------------------------------


def pool_sentences(reps: Tensor, spans, mode: str = "max"):
    """Pool token rows per span; empty (truncated) spans are filtered.

    Returns (pooled, kept): pooled is (len(kept), d), kept lists the
    original span indices that survived.
    """
    kept = [i for i, s in enumerate(spans) if len(s) > 0]
    if not kept:
        raise DegenerateInputError("all spans are empty")
    if mode == "max":
        pooled = ad.rows_max(reps, [spans[i] for i in kept])
    elif mode == "mean":
        pooled = ad.concat([ad.tmean(ad.take_rows(reps, spans[i]), axis=0, keepdims=True) for i in kept], axis=0)
    else:
        raise ValueError(f"unknown pooling {mode!r}")
    return pooled, kept


def _bilstm(x: Tensor, params: dict[str, Tensor], prefix: str):
    """Aligned forward/backward hidden states over the rows of x."""
    fwd = ad.lstm(x, params[f"{prefix}.fwd.wx"], params[f"{prefix}.fwd.wh"], params[f"{prefix}.fwd.b"])
    rev = ad.flip0(ad.lstm(ad.flip0(x), params[f"{prefix}.rev.wx"], params[f"{prefix}.rev.wh"], params[f"{prefix}.rev.b"]))
    return fwd, rev


def sentence_encode_bilstm(pooled: Tensor, params: dict[str, Tensor]):
    """Contextual sentence states plus the global pair representation.

    The global vector concatenates the forward pass's last state with
    the backward pass's state at position 1.
    """
    k = pooled.shape[0]
    fwd, rev = _bilstm(pooled, params, "sent.lstm")
    h_s = ad.add(ad.matmul(ad.concat([fwd, rev], axis=1), params["sent.w1"]), params["sent.b1"])
    ends = ad.concat([ad.take_rows(fwd, [k - 1]), ad.take_rows(rev, [0])], axis=1)
    h_global = ad.add(ad.matmul(ends, params["sent.w2"]), params["sent.b2"])
    return h_s, h_global


def sentence_encode_transformer(pooled: Tensor, params, cfg: NetworkConfig, train=False, rng=None):
    """Self-attention over sentence rows; hypothesis row is the global vector."""
    k = pooled.shape[0]
    if k > cfg.max_sentences:
        raise ValueError(f"{k} sentences exceed max_sentences={cfg.max_sentences}")
    x = ad.add(pooled, ad.take_rows(params["sent.pos"], np.arange(k, dtype=np.int64)))
    for layer in range(cfg.l_s):
        x = transformer_layer(x, params, f"sent.layer{layer:02d}", cfg.n_heads, train, rng, cfg.dropout)
    return x, ad.take_rows(x, [0])


def token_encode_bilstm(reps: Tensor, spans, i: int, params: dict[str, Tensor]) -> Tensor:
    """Hypothesis + i-th premise sentence through a token-level BiLSTM."""
    if not 1 <= i < len(spans):
        raise IndexError(f"premise sentence index {i} out of range")
    if len(spans[0]) == 0 or len(spans[i]) == 0:
        raise DegenerateInputError(f"span {i} or the hypothesis span is empty")
    rows = ad.concat([ad.take_rows(reps, spans[0]), ad.take_rows(reps, spans[i])], axis=0)
    n = rows.shape[0]
    fwd, rev = _bilstm(rows, params, "tok.lstm")
    ends = ad.concat([ad.take_rows(fwd, [n - 1]), ad.take_rows(rev, [0])], axis=1)
    return ad.add(ad.matmul(ends, params["tok.w3"]), params["tok.b3"])


def token_encode_maxpool(reps: Tensor, spans, i: int) -> Tensor:
    """Coordinate-wise max over hypothesis + i-th premise sentence rows."""
    if not 1 <= i < len(spans):
        raise IndexError(f"premise sentence index {i} out of range")
    if len(spans[0]) == 0 or len(spans[i]) == 0:
        raise DegenerateInputError(f"span {i} or the hypothesis span is empty")
    joint = np.concatenate([spans[0], spans[i]])
    return ad.rows_max(reps, [joint])


def classify_entailment(h_global: Tensor, params: dict[str, Tensor]) -> Tensor:
    """Two-layer GELU MLP + softmax over (contradiction, entailment)."""
    if h_global.ndim == 1:
        h_global = ad.reshape(h_global, (1, h_global.shape[0]))
    if not np.all(np.isfinite(h_global.data)):
        raise FloatingPointError("non-finite global representation")
    hidden = ad.gelu(ad.add(ad.matmul(h_global, params["clsA.w1"]), params["clsA.b1"]))
    logits = ad.add(ad.matmul(hidden, params["clsA.w2"]), params["clsA.b2"])
    return ad.reshape(ad.softmax(logits, axis=-1), (2,))


def score_evidence(h_s_i: Tensor, h_t_i: Tensor, params: dict[str, Tensor]) -> Tensor:
    """Sigmoid evidence score from sentence- and token-level vectors."""
    if h_s_i.ndim == 1:
        h_s_i = ad.reshape(h_s_i, (1, h_s_i.shape[0]))
    if h_t_i.ndim == 1:
        h_t_i = ad.reshape(h_t_i, (1, h_t_i.shape[0]))
    if not (np.all(np.isfinite(h_s_i.data)) and np.all(np.isfinite(h_t_i.data))):
        raise FloatingPointError("non-finite sentence or token representation")
    both = ad.concat([h_s_i, h_t_i], axis=1)
    z = ad.add(ad.matmul(both, params["clsB.w"]), params["clsB.b"])
    return ad.reshape(ad.sigmoid(z), ())


# -- full forward ---------------------------------------------------------


def forward_instance(
    seq: TokenSequence,
    enc: EncoderParams,
    cfg: NetworkConfig,
    params: dict[str, Tensor],
    train: bool = False,
    rng: np.random.Generator | None = None,
):
    """Tape-recorded forward pass for one tokenized pair.

    Returns ``(p_a, evidence, h_global)`` where evidence maps the
    0-based premise sentence index to its scalar score tensor; dropped
    sentences are absent.
    """
    pdrop = cfg.dropout if train else 0.0
    reps = embed_and_encode(seq.token_ids, enc, train, rng, pdrop)
    pooled, kept = pool_sentences(reps, seq.spans, cfg.pooling)
    if cfg.sentence_encoder == "bilstm":
        h_s, h_global = sentence_encode_bilstm(pooled, params)
    else:
        h_s, h_global = sentence_encode_transformer(pooled, params, cfg, train, rng)
    p_a = classify_entailment(h_global, params)
    evidence: dict[int, Tensor] = {}
    for row, span_idx in enumerate(kept):
        if span_idx == 0:
            continue
        if cfg.token_encoder == "bilstm":
            h_t = token_encode_bilstm(reps, seq.spans, span_idx, params)
        else:
            h_t = token_encode_maxpool(reps, seq.spans, span_idx)
        evidence[span_idx - 1] = score_evidence(ad.take_rows(h_s, [row]), h_t, params)
    return p_a, evidence, h_global


def mgnet_forward(
    seq: TokenSequence,
    enc: EncoderParams,
    cfg: NetworkConfig,
    params: dict[str, Tensor],
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic eval-mode pass: (2,) probabilities and (m,) scores.

    Truncated-empty premise sentences score 0; ``seq.truncated`` flags
    them.
    """
    with ad.no_grad():
        p_a, evidence, _ = forward_instance(seq, enc, cfg, params, train=False)
    m = seq.n_premise_sentences
    p_b = np.zeros(m, dtype=np.float64)
    for i, t in evidence.items():
        p_b[i] = float(t.data)
    return p_a.data.copy(), p_b


# -- model bundle ---------------------------------------------------------


ENCODER_FILE = "encoder.npz"
NETWORK_FILE = "network.npz"
CONFIG_FILE = "config.json"


class MultiGrainModel:
    """Encoder + network parameters + run-relevant settings as one unit."""

    def __init__(self, enc: EncoderParams, cfg: NetworkConfig, params: dict[str, Tensor],
                 max_len: int = 128, thresholds: dict | None = None):
        if enc.d != cfg.d:
            raise ValueError(f"encoder width {enc.d} != network width {cfg.d}")
        self.enc = enc
        self.cfg = cfg
        self.params = params
        self.max_len = max_len
        self.thresholds = thresholds or {"eta_a": 0.5, "eta_b": 0.5}

    @classmethod
    def create(cls, enc: EncoderParams, cfg: NetworkConfig, seed: int, max_len: int = 128, thresholds=None):
        return cls(enc, cfg, init_network_params(cfg, seed), max_len=max_len, thresholds=thresholds)

    def named_parameters(self):
        yield from self.enc.params.items()
        yield from self.params.items()

    def parameter_groups(self):
        """(encoder params, other params) for the two learning rates."""
        return dict(self.enc.params), dict(self.params)

    def forward(self, seq: TokenSequence, train: bool = False, rng=None):
        return forward_instance(seq, self.enc, self.cfg, self.params, train=train, rng=rng)

    def predict(self, seq: TokenSequence):
        return mgnet_forward(seq, self.enc, self.cfg, self.params)

    def zero_grad(self):
        for _, t in self.named_parameters():
            t.grad = None

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        export_parameters(self.enc, os.path.join(directory, ENCODER_FILE))
        save_container(
            os.path.join(directory, NETWORK_FILE),
            {name: t.data for name, t in self.params.items()},
            {"kind": "multigrain"},
        )
        doc = asdict(self.cfg)
        doc["L_s"] = doc.pop("l_s")
        doc["max_len"] = self.max_len
        doc["thresholds"] = dict(self.thresholds)
        with open(os.path.join(directory, CONFIG_FILE), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, directory):
        with open(os.path.join(directory, CONFIG_FILE), encoding="utf-8") as fh:
            doc = json.load(fh)
        cfg = NetworkConfig(
            sentence_encoder=doc["sentence_encoder"],
            token_encoder=doc["token_encoder"],
            d=doc["d"],
            l_s=doc["L_s"],
            n_heads=doc["n_heads"],
            d_ff=doc["d_ff"],
            max_sentences=doc["max_sentences"],
            dropout=doc["dropout"],
            pooling=doc["pooling"],
        )
        enc = import_parameters(os.path.join(directory, ENCODER_FILE))
        arrays, _ = load_container(os.path.join(directory, NETWORK_FILE))
        params = {name: Tensor(a, requires_grad=True) for name, a in arrays.items()}
        return cls(enc, cfg, params, max_len=doc["max_len"], thresholds=doc.get("thresholds"))
