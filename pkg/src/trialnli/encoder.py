"""Joint semantics encoder: embeddings plus an L-layer transformer.

Post-layer-norm blocks with GELU feed-forward; dropout only in training
mode, so evaluation is deterministic. Parameters live in a flat named
dict of tape tensors, which maps one-to-one onto the container format.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .containers import load_container, save_container

INIT_SCALE = 0.02


class EncodingError(ValueError):
    pass


class SequenceLengthError(ValueError):
    pass


class ContainerMissing(ValueError):
    def __init__(self, name: str, path):
        super().__init__(f"{path}: container missing array {name!r}")
        self.array_name = name


@dataclass
class EncoderParams:
    """Layer count, widths and the named parameter arrays."""

    L: int
    d: int
    n_heads: int
    d_ff: int
    vocab_size: int
    max_positions: int
    params: dict[str, Tensor]

    def meta(self) -> dict:
        return {
            "L": self.L,
            "d": self.d,
            "n_heads": self.n_heads,
            "d_ff": self.d_ff,
            "vocab_size": self.vocab_size,
            "max_positions": self.max_positions,
        }

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.params.items()}

    def set_trainable(self, flag: bool = True):
        for t in self.params.values():
            t.requires_grad = flag


def layer_param_names(layer: int, d_ff_present: bool = True) -> list[str]:
    p = f"layer{layer:02d}"
    names = []
    for piece in ("wq", "wk", "wv", "wo"):
        names.append(f"{p}.attn.{piece}")
    for piece in ("bq", "bk", "bv", "bo"):
        names.append(f"{p}.attn.{piece}")
    names += [f"{p}.ln1.g", f"{p}.ln1.b"]
    names += [f"{p}.ffn.w1", f"{p}.ffn.b1", f"{p}.ffn.w2", f"{p}.ffn.b2"]
    names += [f"{p}.ln2.g", f"{p}.ln2.b"]
    return names


def _init_layer(rng, d: int, d_ff: int, prefix: str, out: dict[str, Tensor]):
    for piece in ("wq", "wk", "wv", "wo"):
        out[f"{prefix}.attn.{piece}"] = Tensor(rng.normal(0.0, INIT_SCALE, (d, d)), requires_grad=True)
    for piece in ("bq", "bk", "bv", "bo"):
        out[f"{prefix}.attn.{piece}"] = Tensor(np.zeros(d), requires_grad=True)
    out[f"{prefix}.ln1.g"] = Tensor(np.ones(d), requires_grad=True)
    out[f"{prefix}.ln1.b"] = Tensor(np.zeros(d), requires_grad=True)
    out[f"{prefix}.ffn.w1"] = Tensor(rng.normal(0.0, INIT_SCALE, (d, d_ff)), requires_grad=True)
    out[f"{prefix}.ffn.b1"] = Tensor(np.zeros(d_ff), requires_grad=True)
    out[f"{prefix}.ffn.w2"] = Tensor(rng.normal(0.0, INIT_SCALE, (d_ff, d)), requires_grad=True)
    out[f"{prefix}.ffn.b2"] = Tensor(np.zeros(d), requires_grad=True)
    out[f"{prefix}.ln2.g"] = Tensor(np.ones(d), requires_grad=True)
    out[f"{prefix}.ln2.b"] = Tensor(np.zeros(d), requires_grad=True)


def init_encoder_params(
    L: int, d: int, n_heads: int, d_ff: int, vocab_size: int, max_positions: int, seed: int
) -> EncoderParams:
    if d % n_heads != 0:
        raise ValueError(f"d={d} not divisible by n_heads={n_heads}")
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {
        "emb.word": Tensor(rng.normal(0.0, INIT_SCALE, (vocab_size, d)), requires_grad=True),
        "emb.pos": Tensor(rng.normal(0.0, INIT_SCALE, (max_positions, d)), requires_grad=True),
        "emb.ln.g": Tensor(np.ones(d), requires_grad=True),
        "emb.ln.b": Tensor(np.zeros(d), requires_grad=True),
    }
    for layer in range(L):
        _init_layer(rng, d, d_ff, f"layer{layer:02d}", params)
    return EncoderParams(
        L=L, d=d, n_heads=n_heads, d_ff=d_ff, vocab_size=vocab_size, max_positions=max_positions, params=params
    )


def transformer_layer(h: Tensor, params: dict[str, Tensor], prefix: str, n_heads: int, train: bool, rng, pdrop: float):
    """One post-layer-norm block: self-attention then feed-forward."""
    n, d = h.shape
    dh = d // n_heads
    scale = 1.0 / np.sqrt(dh)

    def heads(x):
        return ad.transpose(ad.reshape(x, (n, n_heads, dh)), (1, 0, 2))

    q = heads(ad.add(ad.matmul(h, params[f"{prefix}.attn.wq"]), params[f"{prefix}.attn.bq"]))
    k = heads(ad.add(ad.matmul(h, params[f"{prefix}.attn.wk"]), params[f"{prefix}.attn.bk"]))
    v = heads(ad.add(ad.matmul(h, params[f"{prefix}.attn.wv"]), params[f"{prefix}.attn.bv"]))
    scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 2, 1))), scale)
    probs = ad.softmax(scores, axis=-1)
    if train and pdrop > 0:
        probs = ad.dropout(probs, pdrop, rng)
    ctx = ad.reshape(ad.transpose(ad.matmul(probs, v), (1, 0, 2)), (n, d))
    attn = ad.add(ad.matmul(ctx, params[f"{prefix}.attn.wo"]), params[f"{prefix}.attn.bo"])
    if train and pdrop > 0:
        attn = ad.dropout(attn, pdrop, rng)
    h = ad.layernorm(ad.add(h, attn), params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"])
    ff = ad.gelu(ad.add(ad.matmul(h, params[f"{prefix}.ffn.w1"]), params[f"{prefix}.ffn.b1"]))
    ff = ad.add(ad.matmul(ff, params[f"{prefix}.ffn.w2"]), params[f"{prefix}.ffn.b2"])
    if train and pdrop > 0:
        ff = ad.dropout(ff, pdrop, rng)
    return ad.layernorm(ad.add(h, ff), params[f"{prefix}.ln2.g"], params[f"{prefix}.ln2.b"])


def embed_and_encode(
    token_ids: np.ndarray,
    enc: EncoderParams,
    train: bool = False,
    rng: np.random.Generator | None = None,
    pdrop: float = 0.0,
) -> Tensor:
    """Token representations (N, d) for one id sequence."""
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.size and int(ids.max()) >= enc.vocab_size:
        raise EncodingError(f"token id {int(ids.max())} outside vocabulary of size {enc.vocab_size}")
    if ids.size and int(ids.min()) < 0:
        raise EncodingError("negative token id")
    n = ids.shape[0]
    if n > enc.max_positions:
        raise SequenceLengthError(f"sequence length {n} exceeds max_positions {enc.max_positions}")
    word = ad.take_rows(enc.params["emb.word"], ids)
    pos = ad.take_rows(enc.params["emb.pos"], np.arange(n, dtype=np.int64))
    h = ad.layernorm(ad.add(word, pos), enc.params["emb.ln.g"], enc.params["emb.ln.b"])
    if train and pdrop > 0:
        h = ad.dropout(h, pdrop, rng)
    for layer in range(enc.L):
        h = transformer_layer(h, enc.params, f"layer{layer:02d}", enc.n_heads, train, rng, pdrop)
    return h


def extend_positions(enc: EncoderParams, new_max: int, seed: int = 0) -> EncoderParams:
    """Grow the position table; existing rows are copied bitwise."""
    if new_max <= enc.max_positions:
        raise ValueError(f"new_max={new_max} must exceed current max_positions={enc.max_positions}")
    rng = np.random.default_rng(seed)
    old = enc.params["emb.pos"].data
    grown = np.empty((new_max, enc.d), dtype=np.float64)
    grown[: enc.max_positions] = old
    grown[enc.max_positions :] = rng.normal(0.0, INIT_SCALE, (new_max - enc.max_positions, enc.d))
    params = dict(enc.params)
    params["emb.pos"] = Tensor(grown, requires_grad=enc.params["emb.pos"].requires_grad)
    return replace(enc, max_positions=new_max, params=params)


def export_parameters(enc: EncoderParams, path):
    save_container(path, enc.arrays(), enc.meta())


def import_parameters(path) -> EncoderParams:
    arrays, meta = load_container(path)
    required = ["emb.word", "emb.pos", "emb.ln.g", "emb.ln.b"]
    for layer in range(meta["L"]):
        required.extend(layer_param_names(layer))
    for name in required:
        if name not in arrays:
            raise ContainerMissing(name, path)
    d, d_ff = meta["d"], meta["d_ff"]
    expect = {
        "emb.word": (meta["vocab_size"], d),
        "emb.pos": (meta["max_positions"], d),
        "emb.ln.g": (d,),
        "emb.ln.b": (d,),
    }
    for layer in range(meta["L"]):
        p = f"layer{layer:02d}"
        for piece in ("wq", "wk", "wv", "wo"):
            expect[f"{p}.attn.{piece}"] = (d, d)
        for piece in ("bq", "bk", "bv", "bo"):
            expect[f"{p}.attn.{piece}"] = (d,)
        expect[f"{p}.ln1.g"] = expect[f"{p}.ln1.b"] = (d,)
        expect[f"{p}.ffn.w1"] = (d, d_ff)
        expect[f"{p}.ffn.b1"] = (d_ff,)
        expect[f"{p}.ffn.w2"] = (d_ff, d)
        expect[f"{p}.ffn.b2"] = (d,)
        expect[f"{p}.ln2.g"] = expect[f"{p}.ln2.b"] = (d,)
    for name, shape in expect.items():
        if arrays[name].shape != shape:
            raise ValueError(f"array {name!r}: shape {arrays[name].shape} does not match layout {shape}")
    params = {name: Tensor(arrays[name], requires_grad=True) for name in expect}
    return EncoderParams(
        L=meta["L"],
        d=d,
        n_heads=meta["n_heads"],
        d_ff=d_ff,
        vocab_size=meta["vocab_size"],
        max_positions=meta["max_positions"],
        params=params,
    )
