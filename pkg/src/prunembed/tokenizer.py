"""WordPiece tokenization for uncased BERT-style vocabularies.

Pre-tokenization lowercases, strips accents (NFD + drop combining marks),
and splits on whitespace and punctuation, each punctuation character
becoming its own token. Each word is then segmented greedy
longest-match-first against the vocabulary, with "##" marking
continuation pieces; a word with no valid segmentation maps to [UNK].
Pure functions of an immutable vocabulary — safe for concurrent use.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, VocabError

CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"

# Words longer than this map straight to [UNK]; bounds worst-case matching cost.
MAX_WORD_CHARS = 100
DEFAULT_MAX_LEN = 128


class Vocabulary:
    """Immutable token <-> id table with the four required special tokens."""

    def __init__(self, tokens: Sequence[str]):
        self.tokens = tuple(tokens)
        self.index = {token: i for i, token in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            seen: set[str] = set()
            for token in self.tokens:
                if token in seen:
                    raise VocabError(f"vocab error: duplicate token {token!r}")
                seen.add(token)
        for special in (CLS_TOKEN, SEP_TOKEN, PAD_TOKEN, UNK_TOKEN):
            if special not in self.index:
                raise VocabError(f"vocab error: missing special token {special}")
        self.cls_id = self.index[CLS_TOKEN]
        self.sep_id = self.index[SEP_TOKEN]
        self.pad_id = self.index[PAD_TOKEN]
        self.unk_id = self.index[UNK_TOKEN]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    @classmethod
    def from_file(cls, path: str | Path) -> "Vocabulary":
        return cls(Path(path).read_text("utf-8").splitlines())


@dataclass(frozen=True)
class TokenizedBatch:
    """Padded token-id batch: the integer precursor of the encoder input.

    ids: (B, n_max) int64; pad_mask: (B, n_max) bool, True = real token;
    lengths: (B,) int64 count of real tokens per row, special tokens included.
    """

    ids: np.ndarray
    pad_mask: np.ndarray
    lengths: np.ndarray


def _is_punctuation(ch: str) -> bool:
    # ASCII symbol ranges count as punctuation too, matching uncased BERT.
    cp = ord(ch)
    if 33 <= cp <= 47 or 58 <= cp <= 64 or 91 <= cp <= 96 or 123 <= cp <= 126:
        return True
    return unicodedata.category(ch).startswith("P")


def basic_tokenize(text: str) -> list[str]:
    """Lowercase, strip accents, split on whitespace and punctuation."""
    out: list[str] = []
    word: list[str] = []
    for ch in unicodedata.normalize("NFD", text.lower()):
        if unicodedata.category(ch) == "Mn":
            continue
        if ch.isspace():
            if word:
                out.append("".join(word))
                word = []
        elif _is_punctuation(ch):
            if word:
                out.append("".join(word))
                word = []
            out.append(ch)
        else:
            word.append(ch)
    if word:
        out.append("".join(word))
    return out


def wordpiece(word: str, vocab: Vocabulary) -> list[str]:
    """Greedy longest-match-first segmentation of a single word."""
    if len(word) > MAX_WORD_CHARS:
        return [UNK_TOKEN]
    pieces: list[str] = []
    start = 0
    while start < len(word):
        end = len(word)
        match = None
        while start < end:
            piece = word[start:end]
            if start > 0:
                piece = "##" + piece
            if piece in vocab:
                match = piece
                break
            end -= 1
        if match is None:
            return [UNK_TOKEN]
        pieces.append(match)
        start = end
    return pieces


def text_to_ids(text: str, vocab: Vocabulary, max_len: int) -> list[int]:
    """Token ids for one text: [CLS] pieces... [SEP], truncated to max_len."""
    ids = [vocab.cls_id]
    budget = max_len - 2
    for word in basic_tokenize(text):
        if len(ids) - 1 >= budget:
            break
        for piece in wordpiece(word, vocab):
            if len(ids) - 1 >= budget:
                break
            ids.append(vocab.index[piece])
    ids.append(vocab.sep_id)
    return ids


def tokenize(texts: Iterable[str], vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN) -> TokenizedBatch:
    """Tokenize a batch, padding every row to the max in-batch length."""
    texts = list(texts)
    if not texts:
        raise DataError("empty batch")
    if max_len < 2:
        raise ConfigError(f"config error: max_len must be >= 2, got {max_len}")
    rows = [text_to_ids(text, vocab, max_len) for text in texts]
    lengths = np.array([len(row) for row in rows], dtype=np.int64)
    n_max = int(lengths.max())
    ids = np.full((len(rows), n_max), vocab.pad_id, dtype=np.int64)
    pad_mask = np.zeros((len(rows), n_max), dtype=bool)
    for b, row in enumerate(rows):
        ids[b, : len(row)] = row
        pad_mask[b, : len(row)] = True
    return TokenizedBatch(ids=ids, pad_mask=pad_mask, lengths=lengths)
