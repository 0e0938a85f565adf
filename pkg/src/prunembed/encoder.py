"""BERT-style encoder forward pass producing unit-norm sentence embeddings.

Embeddings are the L2-normalized mean over surviving non-pad token vectors
of the final layer. When a PruneConfig is given, pruning runs inside layer
l (1-based), immediately after the attention sub-layer's residual+layernorm
and before that layer's feed-forward, so every later computation sees the
shortened, repacked batch. Position embeddings are assigned once, before
any pruning, and travel with the surviving tokens.

Padding discipline: pad keys receive exactly zero attention probability
and pad lanes are zeroed after every sub-layer, so a sentence's embedding
cannot depend on how wide its batch is padded. encode() is read-only on
the model and safe to run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.special import erf

from .errors import ConfigError, ShapeError, VocabError
from .model_io import EncoderModel, LayerWeights
from .pruner import PruneConfig, apply_pruning, select_tokens, token_importance
from .tokenizer import DEFAULT_MAX_LEN, TokenizedBatch, Vocabulary, tokenize

DEFAULT_BATCH_SIZE = 64

_INV_SQRT2 = np.float32(1.0 / np.sqrt(2.0))


@dataclass(frozen=True)
class HiddenStates:
    """Per-layer activations: (B, n, d_model) values plus padding bookkeeping."""

    values: np.ndarray
    pad_mask: np.ndarray
    lengths: np.ndarray


@dataclass(frozen=True)
class AttentionScores:
    """Post-softmax attention: per_head (B, H, n, n) and its mean over heads."""

    per_head: np.ndarray
    head_mean: np.ndarray


def _layer_norm(x: np.ndarray, scale: np.ndarray, bias: np.ndarray, eps: float) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / np.sqrt(var + np.float32(eps)) * scale + bias


def _gelu(x: np.ndarray) -> np.ndarray:
    # Exact erf form, matching the referenced checkpoint family.
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def attention(
    hidden: HiddenStates, layer: LayerWeights, num_heads: int, eps: float = 1e-12
) -> tuple[HiddenStates, AttentionScores]:
    """Multi-head self-attention sub-layer with residual + layernorm.

    Pad keys are masked to -inf before the (max-subtracted) softmax, which
    makes their probability exactly zero; every row, pad queries included,
    is then row-stochastic over the real keys.
    """
    values, pad_mask = hidden.values, hidden.pad_mask
    B, n, d = values.shape
    if layer.wq.shape != (d, d):
        raise ShapeError(f"shape error: attention weights are {layer.wq.shape}, input width is {d}")
    if num_heads < 1 or d % num_heads:
        raise ShapeError(f"shape error: {num_heads} heads do not divide d_model={d}")
    H = num_heads
    dk = d // H

    flat = values.reshape(B * n, d)

    def project(w: np.ndarray, b: np.ndarray) -> np.ndarray:
        return (flat @ w + b).reshape(B, n, H, dk).transpose(0, 2, 1, 3)

    q = project(layer.wq, layer.bq)
    k = project(layer.wk, layer.bk)
    v = project(layer.wv, layer.bv)

    logits = np.matmul(q, k.transpose(0, 1, 3, 2)) / np.float32(np.sqrt(dk))
    logits = np.where(pad_mask[:, None, None, :], logits, np.float32(-np.inf))
    if logits.size:
        logits -= logits.max(axis=-1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=-1, keepdims=True)

    context = np.matmul(probs, v).transpose(0, 2, 1, 3).reshape(B * n, d)
    attn_out = (context @ layer.wo + layer.bo).reshape(B, n, d)

    new_values = _layer_norm(values + attn_out, layer.attn_norm_scale, layer.attn_norm_bias, eps)
    new_values = new_values * pad_mask[..., None]
    scores = AttentionScores(per_head=probs, head_mean=probs.mean(axis=1))
    return HiddenStates(new_values, pad_mask, hidden.lengths), scores


def feed_forward(hidden: HiddenStates, layer: LayerWeights, eps: float = 1e-12) -> HiddenStates:
    """Token-wise GELU MLP with residual + layernorm; pad rows come out zero."""
    values, pad_mask = hidden.values, hidden.pad_mask
    B, n, d = values.shape
    if layer.ffn_w1.shape[0] != d:
        raise ShapeError(f"shape error: ffn expects width {layer.ffn_w1.shape[0]}, input width is {d}")
    flat = values.reshape(B * n, d)
    inner = _gelu(flat @ layer.ffn_w1 + layer.ffn_b1)
    out = (inner @ layer.ffn_w2 + layer.ffn_b2).reshape(B, n, d)
    new_values = _layer_norm(values + out, layer.ffn_norm_scale, layer.ffn_norm_bias, eps)
    new_values = new_values * pad_mask[..., None]
    return HiddenStates(new_values, pad_mask, hidden.lengths)


def _embed_tokens(model: EncoderModel, batch: TokenizedBatch) -> HiddenStates:
    cfg = model.config
    ids, pad_mask, lengths = batch.ids, batch.pad_mask, batch.lengths
    if ids.ndim != 2 or pad_mask.shape != ids.shape or lengths.shape != (ids.shape[0],):
        raise ShapeError(f"shape error: inconsistent batch shapes {ids.shape} / {pad_mask.shape}")
    B, n = ids.shape
    if B and (int(ids.min()) < 0 or int(ids.max()) >= cfg.vocab_size):
        raise VocabError(f"vocab error: token id out of range [0, {cfg.vocab_size})")
    if B and int(lengths.min()) < 1:
        raise ShapeError("shape error: every sentence needs at least one real token")
    if n > cfg.max_position:
        raise ShapeError(f"shape error: sequence length {n} exceeds max_position {cfg.max_position}")
    emb = (
        model.token_embeddings[ids]
        + model.position_embeddings[:n][None, :, :]
        + model.segment_embeddings[0][None, None, :]
    )
    values = _layer_norm(emb, model.embed_norm_scale, model.embed_norm_bias, cfg.layernorm_eps)
    values = values * pad_mask[..., None]
    return HiddenStates(values, pad_mask, lengths)


def _check_prune(prune: PruneConfig | None, num_layers: int) -> None:
    if prune is None:
        return
    if not isinstance(prune, PruneConfig):
        raise ConfigError("config error: prune must be a PruneConfig")
    if not 1 <= prune.l <= num_layers:
        raise ConfigError(f"config error: prune layer {prune.l} outside [1, {num_layers}]")


def forward_hidden(model: EncoderModel, batch: TokenizedBatch, prune: PruneConfig | None = None) -> HiddenStates:
    """Run the full stack of layers, pruning inside layer prune.l if given."""
    cfg = model.config
    _check_prune(prune, cfg.num_layers)
    hidden = _embed_tokens(model, batch)
    for index, layer in enumerate(model.layers, start=1):
        hidden, scores = attention(hidden, layer, cfg.num_heads, cfg.layernorm_eps)
        if prune is not None and index == prune.l and bool((hidden.lengths >= prune.s).any()):
            # When every sentence is below s the step is the identity;
            # skipping it keeps the short-sentence overhead at zero.
            importance = token_importance(scores, hidden.pad_mask, hidden.lengths)
            keep = select_tokens(importance, prune, hidden.lengths)
            hidden = apply_pruning(hidden, keep)
        hidden = feed_forward(hidden, layer, cfg.layernorm_eps)
    return hidden


def pool_normalize(hidden: HiddenStates) -> np.ndarray:
    """Mean over surviving non-pad tokens, L2-normalized; (B, d_model) rows."""
    counts = hidden.lengths.astype(hidden.values.dtype)
    sums = hidden.values.sum(axis=1)
    mean = sums / counts[:, None]
    norms = np.linalg.norm(mean, axis=1, keepdims=True)
    return mean / np.maximum(norms, 1e-12)


def encode(model: EncoderModel, batch: TokenizedBatch, prune: PruneConfig | None = None) -> np.ndarray:
    """Sentence embeddings for a tokenized batch; rows are unit-norm."""
    return pool_normalize(forward_hidden(model, batch, prune))


def embed_texts(
    model: EncoderModel,
    vocab: Vocabulary,
    texts: Iterable[str],
    prune: PruneConfig | None = None,
    max_len: int = DEFAULT_MAX_LEN,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> np.ndarray:
    """tokenize -> encode over fixed-size chunks, in input order."""
    texts = list(texts)
    if not texts:
        return np.zeros((0, model.config.d_model), dtype=np.float32)
    out = []
    for start in range(0, len(texts), batch_size):
        batch = tokenize(texts[start : start + batch_size], vocab, max_len)
        out.append(encode(model, batch, prune))
    return np.concatenate(out, axis=0)
