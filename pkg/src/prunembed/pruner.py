"""Attention-score token importance and the (s, q, l) pruning policy.

A token's importance is the column sum, over non-padded rows, of the
head-averaged attention matrix. Per sentence, the keep_count(n, q)
highest-importance tokens survive, in their original order; sentences
shorter than s tokens are never pruned. All operations are pure.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConfigError, ShapeError

if TYPE_CHECKING:
    from .encoder import AttentionScores, HiddenStates


@dataclass(frozen=True)
class PruneConfig:
    """Pruning policy: minimum eligible length s, kept fraction q, layer l.

    l is 1-based: l=1 prunes at the first transformer layer. q is the
    fraction of tokens KEPT, not discarded.
    """

    s: int
    q: float
    l: int

    def __post_init__(self):
        if self.s < 1:
            raise ConfigError(f"config error: s must be >= 1, got {self.s}")
        if not 0.0 < self.q <= 1.0:
            raise ConfigError(f"config error: q must be in (0, 1], got {self.q}")
        if self.l < 1:
            raise ConfigError(f"config error: l must be >= 1, got {self.l}")

    def to_json(self) -> dict:
        return {"s": self.s, "q": self.q, "l": self.l}

    @classmethod
    def from_json(cls, data: dict | str) -> "PruneConfig":
        if isinstance(data, str):
            data = json.loads(data)
        try:
            return cls(s=int(data["s"]), q=float(data["q"]), l=int(data["l"]))
        except KeyError as exc:
            raise ConfigError(f"config error: prune config missing key {exc}") from exc


def keep_count(n: int, q: float) -> int:
    """Number of tokens kept from an n-token sentence: max(1, ceil(q*n)).

    The small slack guards against float products like 0.8*20 landing an
    ulp above the exact integer.
    """
    if n < 1:
        raise ConfigError(f"config error: n must be >= 1, got {n}")
    if not 0.0 < q <= 1.0:
        raise ConfigError(f"config error: q must be in (0, 1], got {q}")
    return max(1, math.ceil(n * q - 1e-9))


def token_importance(scores: "AttentionScores", pad_mask: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Per-token importance: column sums of the head-averaged attention.

    Only non-padded rows contribute, so a sentence's scores are identical
    no matter how much padding its batch carries. Returns a (B, n) float64
    array with zeros at pad positions.
    """
    mean = scores.head_mean
    if mean.ndim != 3 or mean.shape[1] != mean.shape[2]:
        raise ShapeError(f"shape error: head_mean must be (B, n, n), got {mean.shape}")
    B, n = mean.shape[:2]
    if pad_mask.shape != (B, n):
        raise ShapeError(f"shape error: pad_mask {pad_mask.shape} does not match attention {mean.shape}")
    if lengths.shape != (B,) or not np.array_equal(pad_mask.sum(axis=1), lengths):
        raise ShapeError("shape error: lengths inconsistent with pad_mask")
    # Masking the row axis keeps pad rows out of the sums even when their
    # entries are nonzero.
    contrib = np.where(pad_mask[:, :, None], mean, 0.0)
    importance = contrib.sum(axis=1, dtype=np.float64)
    importance[~pad_mask] = 0.0
    return importance


def select_tokens(importance: np.ndarray, config: PruneConfig, lengths: np.ndarray) -> list[np.ndarray]:
    """Surviving original positions per sentence, sorted ascending.

    Sentences shorter than config.s keep every position. Ties in
    importance break toward the earlier position.
    """
    keep: list[np.ndarray] = []
    for b, n in enumerate(np.asarray(lengths, dtype=np.int64)):
        n = int(n)
        if n < config.s:
            keep.append(np.arange(n, dtype=np.int64))
            continue
        row = importance[b, :n]
        k = keep_count(n, config.q)
        # Stable sort on the negated scores: equal scores keep original
        # (earlier-first) order.
        top = np.argsort(-row, kind="stable")[:k]
        keep.append(np.sort(top).astype(np.int64))
    return keep


def apply_pruning(hidden: "HiddenStates", keep: list[np.ndarray]) -> "HiddenStates":
    """Gather surviving rows and repack the batch to its new max length."""
    values, pad_mask = hidden.values, hidden.pad_mask
    B, n = values.shape[:2]
    if len(keep) != B:
        raise ShapeError(f"shape error: {len(keep)} keep sets for batch of {B}")
    new_lengths = np.array([len(k) for k in keep], dtype=np.int64)
    n_max = int(new_lengths.max()) if B else 0
    new_values = np.zeros((B, n_max) + values.shape[2:], dtype=values.dtype)
    new_mask = np.zeros((B, n_max), dtype=bool)
    for b, positions in enumerate(keep):
        positions = np.asarray(positions, dtype=np.int64)
        if positions.size and (positions.min() < 0 or positions.max() >= n):
            raise ShapeError(f"shape error: keep positions out of range for sentence {b}")
        new_values[b, : len(positions)] = values[b, positions]
        new_mask[b, : len(positions)] = True
    return dataclasses.replace(hidden, values=new_values, pad_mask=new_mask, lengths=new_lengths)
