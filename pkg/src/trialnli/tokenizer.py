"""Fixed whitespace + wordpiece-style tokenizer for the toy encoder.

The vocabulary is a frozen list: special markers, single characters
(with ``##`` continuation variants) and the closed lexicon used by the
synthetic corpus templates. Unknown words decompose greedily into
pieces and bottom out at characters, so any ASCII text encodes without
[UNK] in practice. Instances are immutable and safe to share across
threads.
"""

from __future__ import annotations

import re
import string

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP)

_WORD_RE = re.compile(r"\w+|[^\w\s]")


class Tokenizer:
    def __init__(self, vocab: list[str]):
        if len(set(vocab)) != len(vocab):
            raise ValueError("vocabulary contains duplicate entries")
        for tok in SPECIAL_TOKENS:
            if tok not in vocab:
                raise ValueError(f"vocabulary missing special token {tok}")
        self.vocab = tuple(vocab)
        self.index = {tok: i for i, tok in enumerate(vocab)}
        self.pad_id = self.index[PAD]
        self.unk_id = self.index[UNK]
        self.cls_id = self.index[CLS]
        self.sep_id = self.index[SEP]

    def __len__(self) -> int:
        return len(self.vocab)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def _wordpieces(self, word: str) -> list[str]:
        pieces = []
        start = 0
        while start < len(word):
            end = len(word)
            piece = None
            while end > start:
                cand = word[start:end]
                if start > 0:
                    cand = "##" + cand
                if cand in self.index:
                    piece = cand
                    break
                end -= 1
            if piece is None:
                return [UNK]
            pieces.append(piece)
            start = end
        return pieces

    def tokenize(self, text: str) -> list[str]:
        out = []
        for word in _WORD_RE.findall(text.lower()):
            out.extend(self._wordpieces(word))
        return out

    def encode(self, text: str) -> list[int]:
        return [self.index[t] for t in self.tokenize(text)]

    def decode(self, ids) -> str:
        words = []
        for i in ids:
            tok = self.vocab[int(i)]
            if tok in SPECIAL_TOKENS:
                continue
            if tok.startswith("##") and words:
                words[-1] += tok[2:]
            else:
                words.append(tok)
        return " ".join(words)


def char_base_vocab() -> list[str]:
    """Single characters plus ## continuations: the coverage floor."""
    chars = string.ascii_lowercase + string.digits + string.punctuation
    base = list(SPECIAL_TOKENS)
    base.extend(chars)
    base.extend("##" + c for c in chars)
    return base


def default_tokenizer() -> Tokenizer:
    """The tokenizer shipped with the toy encoder: char base + template lexicon."""
    from .synthetic import TEMPLATE_LEXICON

    vocab = char_base_vocab()
    known = set(vocab)
    for word in TEMPLATE_LEXICON:
        if word not in known:
            vocab.append(word)
            known.add(word)
    return Tokenizer(vocab)
