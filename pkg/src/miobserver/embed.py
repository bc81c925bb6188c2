"""Vocabulary and embedding tables for words and speakers.

Index 0 is PAD and index 1 is UNK in every vocabulary. The PAD row of the
word embedding matrix is pinned to zero: it is zeroed at construction and
its gradient row is dropped before every optimizer step (see train.py), so
padding can never leak signal into a window.
"""

from __future__ import annotations

import re
from collections import Counter
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, ParseError, ShapeError
from .tensor import Tensor, dropout, take_rows

PAD = 0
UNK = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

SPEAKERS = ("C", "T")

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^a-z0-9\s]")


def tokenize(text: str) -> list[str]:
    """Lower-case and split on whitespace; punctuation becomes its own token."""
    return _TOKEN_RE.findall(text.lower())


class Vocab:
    """Token-to-index mapping with reserved PAD=0 and UNK=1 slots."""

    def __init__(self, tokens: Sequence[str]):
        self.tokens = [PAD_TOKEN, UNK_TOKEN, *tokens]
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ParseError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def encode(self, tokens: Iterable[str]) -> list[int]:
        idx = self.index
        return [idx.get(t, UNK) for t in tokens]


def build_vocab(corpus: Iterable, min_count: int = 1) -> Vocab:
    """Count tokens over the corpus and keep those with count >= min_count.

    ``corpus`` yields either raw strings (tokenized here) or pre-split
    token sequences. Kept tokens are indexed by descending frequency,
    ties broken lexically, after the two reserved slots.
    """
    counts: Counter[str] = Counter()
    for doc in corpus:
        toks = tokenize(doc) if isinstance(doc, str) else doc
        counts.update(toks)
    kept = [t for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocab(kept)


def load_static_vectors(
    path: str, vocab: Vocab, d_w: int, rng: np.random.Generator
) -> np.ndarray:
    """Build an initial embedding matrix from a static-vector text file.

    Each line is a token followed by ``d_w`` space-separated decimals.
    Tokens absent from the file (UNK included) are drawn uniform(-0.1, 0.1);
    the PAD row stays zero. Malformed lines raise ParseError with the
    line number.
    """
    found: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != d_w + 1:
                raise ParseError(
                    f"expected a token and {d_w} values, got {len(parts)} fields",
                    line=lineno,
                )
            try:
                vec = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            except ValueError:
                raise ParseError("non-numeric vector component", line=lineno) from None
            found[parts[0]] = vec
    matrix = rng.uniform(-0.1, 0.1, size=(len(vocab), d_w))
    for i, token in enumerate(vocab.tokens):
        if token in found:
            matrix[i] = found[token]
    matrix[PAD] = 0.0
    return matrix


class EmbeddingTable:
    """Trainable token embeddings with an optional static initialization."""

    def __init__(
        self,
        vocab_size: int,
        d_w: int,
        rng: np.random.Generator,
        init: np.ndarray | None = None,
    ):
        if init is not None:
            if init.shape != (vocab_size, d_w):
                raise ShapeError(
                    f"static matrix shape {init.shape} != ({vocab_size}, {d_w})"
                )
            matrix = np.array(init, dtype=np.float64)
        else:
            matrix = rng.uniform(-0.1, 0.1, size=(vocab_size, d_w))
        matrix[PAD] = 0.0
        self.weight = Tensor(matrix)
        self.d_w = d_w

    def lookup(self, ids) -> Tensor:
        return take_rows(self.weight, ids)


class SpeakerTable:
    """Trainable embeddings for the two speaker roles."""

    def __init__(self, d_s: int, rng: np.random.Generator):
        self.weight = Tensor(rng.uniform(-0.1, 0.1, size=(len(SPEAKERS), d_s)))
        self.d_s = d_s

    def lookup(self, ids) -> Tensor:
        return take_rows(self.weight, ids)


def speaker_index(speaker: str) -> int:
    try:
        return SPEAKERS.index(speaker)
    except ValueError:
        raise ContractError(f"unknown speaker {speaker!r}, expected one of {SPEAKERS}") from None


def embed_utterance(
    tokens: Sequence[str],
    speaker: str,
    vocab: Vocab,
    words: EmbeddingTable,
    speakers: SpeakerTable,
    training: bool = False,
    p_drop: float = 0.3,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Embed one utterance: (word matrix [T, d_w], speaker vector [d_s]).

    The word matrix passes through embedding dropout when training.
    """
    ids = vocab.encode(tokens)
    mat = words.lookup(np.asarray(ids, dtype=np.intp))
    mat = dropout(mat, p_drop, training, rng)
    spk = speakers.lookup(np.asarray([speaker_index(speaker)], dtype=np.intp)).reshape(-1)
    return mat, spk
