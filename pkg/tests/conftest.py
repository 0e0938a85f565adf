from __future__ import annotations

import numpy as np
import pytest

from prunembed.model_io import EncoderConfig, init_random_encoder
from prunembed.tokenizer import Vocabulary

# Simple words tokenize to a single piece each; "unaffable" exercises the
# multi-piece path.
VOCAB_TOKENS = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]",
    "un", "##aff", "##able",
    "hello", "world", "book", "a", "flight", "to", "the", "store",
    "play", "music", "turn", "off", "on", "lights", "what", "is",
    "my", "balance", "transfer", "money", "weather", "in", "boston",
    ",", ".", "?", "!", "'", "s",
] + [f"w{i:02d}" for i in range(40)]


@pytest.fixture(scope="session")
def vocab() -> Vocabulary:
    return Vocabulary(VOCAB_TOKENS)


@pytest.fixture(scope="session")
def tiny_config() -> EncoderConfig:
    return EncoderConfig(
        num_layers=2,
        num_heads=2,
        d_model=8,
        d_k=4,
        d_ff=16,
        vocab_size=len(VOCAB_TOKENS),
        max_position=64,
    )


@pytest.fixture(scope="session")
def tiny_model(tiny_config):
    return init_random_encoder(tiny_config, seed=7)


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory, tiny_model):
    from prunembed.model_io import save_model

    path = tmp_path_factory.mktemp("model") / "tiny"
    save_model(tiny_model, path, VOCAB_TOKENS)
    return path


@pytest.fixture(scope="session")
def small_model():
    # 4 layers, wide enough that pruning effects are visible in timings.
    config = EncoderConfig(
        num_layers=4,
        num_heads=4,
        d_model=32,
        d_k=8,
        d_ff=64,
        vocab_size=len(VOCAB_TOKENS),
        max_position=64,
    )
    return init_random_encoder(config, seed=11)


def make_config(num_layers=2, num_heads=2, d_model=8, d_ff=None, vocab_size=None, max_position=64):
    return EncoderConfig(
        num_layers=num_layers,
        num_heads=num_heads,
        d_model=d_model,
        d_k=d_model // num_heads,
        d_ff=d_ff if d_ff is not None else 2 * d_model,
        vocab_size=vocab_size if vocab_size is not None else len(VOCAB_TOKENS),
        max_position=max_position,
    )


def random_words(rng: np.random.Generator, count: int) -> str:
    """A text of `count` single-piece words drawn from the shared vocab."""
    choices = rng.integers(0, 40, size=count)
    return " ".join(f"w{i:02d}" for i in choices)


def row_stochastic_attention(rng: np.random.Generator, batch: int, heads: int, n: int, lengths):
    """Random per-head attention that honors the padding contract.

    Every row is row-stochastic over the real keys of its sentence; pad
    keys carry exactly zero probability. Pad query rows are filled like
    real ones (key-only masking), matching the encoder's convention.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    per_head = np.zeros((batch, heads, n, n), dtype=np.float64)
    for b, nb in enumerate(lengths):
        raw = rng.uniform(0.05, 1.0, size=(heads, n, int(nb)))
        per_head[b, :, :, : int(nb)] = raw / raw.sum(axis=-1, keepdims=True)
    pad_mask = np.arange(n)[None, :] < lengths[:, None]
    return per_head, per_head.mean(axis=1), pad_mask
