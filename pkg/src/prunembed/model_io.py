"""Load, save, and randomly initialize BERT-style encoder weights.

On-disk layout of a model directory:

    model.safetensors   tensor archive, float32 (see archive.py)
    config.json         architecture hyperparameters (keys below)
    vocab.txt           UTF-8, one token per line, line index = token id

Tensor naming scheme (shapes in terms of the config):

    embeddings.token            (vocab_size, d_model)
    embeddings.position         (max_position, d_model)
    embeddings.segment          (2, d_model)
    embeddings.norm.scale       (d_model,)
    embeddings.norm.bias        (d_model,)
    layers.{i}.attn.wq|wk|wv|wo (d_model, d_model)   applied as x @ w + b
    layers.{i}.attn.bq|bk|bv|bo (d_model,)
    layers.{i}.attn.norm.scale  (d_model,)
    layers.{i}.attn.norm.bias   (d_model,)
    layers.{i}.ffn.w1           (d_model, d_ff)
    layers.{i}.ffn.b1           (d_ff,)
    layers.{i}.ffn.w2           (d_ff, d_model)
    layers.{i}.ffn.b2           (d_model,)
    layers.{i}.ffn.norm.scale   (d_model,)
    layers.{i}.ffn.norm.bias    (d_model,)

{i} is the 0-based layer index. A loaded EncoderModel is immutable and
safe to share across concurrent readers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .archive import read_tensors, write_tensors
from .errors import ArtifactError, ConfigError, CorruptWeightsError, ShapeError
from .tokenizer import Vocabulary

ARCHIVE_FILE = "model.safetensors"
CONFIG_FILE = "config.json"
VOCAB_FILE = "vocab.txt"

CONFIG_KEYS = (
    "num_layers",
    "num_heads",
    "d_model",
    "d_k",
    "d_ff",
    "vocab_size",
    "max_position",
    "layernorm_eps",
)


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture hyperparameters of a BERT-style encoder."""

    num_layers: int
    num_heads: int
    d_model: int
    d_k: int
    d_ff: int
    vocab_size: int
    max_position: int
    layernorm_eps: float = 1e-12

    def __post_init__(self):
        dims = {
            "num_layers": self.num_layers,
            "num_heads": self.num_heads,
            "d_model": self.d_model,
            "d_k": self.d_k,
            "d_ff": self.d_ff,
            "vocab_size": self.vocab_size,
        }
        for key, value in dims.items():
            if int(value) < 1:
                raise ConfigError(f"config error: {key} must be >= 1, got {value}")
        if self.max_position < 2:
            raise ConfigError(f"config error: max_position must be >= 2, got {self.max_position}")
        if not self.layernorm_eps > 0:
            raise ConfigError("config error: layernorm_eps must be > 0")
        if self.d_k * self.num_heads != self.d_model:
            raise ConfigError(
                "config error: d_k * num_heads must equal d_model "
                f"({self.d_k} * {self.num_heads} != {self.d_model})"
            )

    def to_dict(self) -> dict:
        return {key: getattr(self, key) for key in CONFIG_KEYS}

    @classmethod
    def from_dict(cls, data: dict) -> "EncoderConfig":
        missing = [key for key in CONFIG_KEYS if key not in data]
        if missing:
            raise ConfigError(f"config error: missing keys {missing}")
        kwargs = {key: data[key] for key in CONFIG_KEYS}
        for key in CONFIG_KEYS[:-1]:
            kwargs[key] = int(kwargs[key])
        kwargs["layernorm_eps"] = float(kwargs["layernorm_eps"])
        return cls(**kwargs)


@dataclass(frozen=True)
class LayerWeights:
    """Weights of one transformer layer (heads packed into d_model x d_model)."""

    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    attn_norm_scale: np.ndarray
    attn_norm_bias: np.ndarray
    ffn_w1: np.ndarray
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray
    ffn_b2: np.ndarray
    ffn_norm_scale: np.ndarray
    ffn_norm_bias: np.ndarray


@dataclass(frozen=True)
class EncoderModel:
    """A fully loaded encoder: config plus every weight tensor."""

    config: EncoderConfig
    token_embeddings: np.ndarray
    position_embeddings: np.ndarray
    segment_embeddings: np.ndarray
    embed_norm_scale: np.ndarray
    embed_norm_bias: np.ndarray
    layers: tuple[LayerWeights, ...]


_LAYER_FIELDS = (
    ("attn.wq", "wq"),
    ("attn.bq", "bq"),
    ("attn.wk", "wk"),
    ("attn.bk", "bk"),
    ("attn.wv", "wv"),
    ("attn.bv", "bv"),
    ("attn.wo", "wo"),
    ("attn.bo", "bo"),
    ("attn.norm.scale", "attn_norm_scale"),
    ("attn.norm.bias", "attn_norm_bias"),
    ("ffn.w1", "ffn_w1"),
    ("ffn.b1", "ffn_b1"),
    ("ffn.w2", "ffn_w2"),
    ("ffn.b2", "ffn_b2"),
    ("ffn.norm.scale", "ffn_norm_scale"),
    ("ffn.norm.bias", "ffn_norm_bias"),
)


def expected_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    """Full tensor-name -> shape map required by `config`."""
    d, f = config.d_model, config.d_ff
    shapes: dict[str, tuple[int, ...]] = {
        "embeddings.token": (config.vocab_size, d),
        "embeddings.position": (config.max_position, d),
        "embeddings.segment": (2, d),
        "embeddings.norm.scale": (d,),
        "embeddings.norm.bias": (d,),
    }
    layer_shapes = {
        "attn.wq": (d, d),
        "attn.bq": (d,),
        "attn.wk": (d, d),
        "attn.bk": (d,),
        "attn.wv": (d, d),
        "attn.bv": (d,),
        "attn.wo": (d, d),
        "attn.bo": (d,),
        "attn.norm.scale": (d,),
        "attn.norm.bias": (d,),
        "ffn.w1": (d, f),
        "ffn.b1": (f,),
        "ffn.w2": (f, d),
        "ffn.b2": (d,),
        "ffn.norm.scale": (d,),
        "ffn.norm.bias": (d,),
    }
    for i in range(config.num_layers):
        for suffix, shape in layer_shapes.items():
            shapes[f"layers.{i}.{suffix}"] = shape
    return shapes


def model_tensors(model: EncoderModel) -> dict[str, np.ndarray]:
    """Flatten a model into the archive's tensor-name -> array map."""
    tensors = {
        "embeddings.token": model.token_embeddings,
        "embeddings.position": model.position_embeddings,
        "embeddings.segment": model.segment_embeddings,
        "embeddings.norm.scale": model.embed_norm_scale,
        "embeddings.norm.bias": model.embed_norm_bias,
    }
    for i, layer in enumerate(model.layers):
        for suffix, attr in _LAYER_FIELDS:
            tensors[f"layers.{i}.{suffix}"] = getattr(layer, attr)
    return tensors


def _validate_tensors(config: EncoderConfig, tensors: dict[str, np.ndarray]) -> None:
    shapes = expected_shapes(config)
    for name in tensors:
        if name not in shapes:
            raise ShapeError(f"shape error: unexpected tensor '{name}'")
    for name, shape in shapes.items():
        if name not in tensors:
            raise ArtifactError(f"artifact missing: tensor '{name}'")
        got = tuple(tensors[name].shape)
        if got != shape:
            raise ShapeError(f"shape error: tensor '{name}' has shape {got}, expected {shape}")
    for name, arr in tensors.items():
        if not np.isfinite(arr).all():
            raise CorruptWeightsError(f"corrupt weights: tensor '{name}' contains non-finite values")


def _assemble(config: EncoderConfig, tensors: dict[str, np.ndarray]) -> EncoderModel:
    layers = []
    for i in range(config.num_layers):
        kwargs = {attr: tensors[f"layers.{i}.{suffix}"] for suffix, attr in _LAYER_FIELDS}
        layers.append(LayerWeights(**kwargs))
    return EncoderModel(
        config=config,
        token_embeddings=tensors["embeddings.token"],
        position_embeddings=tensors["embeddings.position"],
        segment_embeddings=tensors["embeddings.segment"],
        embed_norm_scale=tensors["embeddings.norm.scale"],
        embed_norm_bias=tensors["embeddings.norm.bias"],
        layers=tuple(layers),
    )


def load_model(model_dir: str | Path) -> EncoderModel:
    """Load and fully validate a model directory.

    Raises ArtifactError for missing files or tensors, ShapeError for
    shape mismatches (naming the tensor), CorruptWeightsError for
    non-finite values, ConfigError for a bad config file.
    """
    model_dir = Path(model_dir)
    if not model_dir.is_dir():
        raise ArtifactError(f"artifact missing: {model_dir}")
    config_path = model_dir / CONFIG_FILE
    vocab_path = model_dir / VOCAB_FILE
    archive_path = model_dir / ARCHIVE_FILE
    for path in (config_path, vocab_path, archive_path):
        if not path.is_file():
            raise ArtifactError(f"artifact missing: {path}")
    try:
        config = EncoderConfig.from_dict(json.loads(config_path.read_text("utf-8")))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config error: {config_path} is not valid JSON: {exc}") from exc

    vocab_lines = vocab_path.read_text("utf-8").splitlines()
    if len(vocab_lines) != config.vocab_size:
        raise ConfigError(
            f"config error: vocab.txt has {len(vocab_lines)} tokens, "
            f"config declares vocab_size={config.vocab_size}"
        )

    tensors = read_tensors(archive_path)
    _validate_tensors(config, tensors)
    return _assemble(config, tensors)


def load_vocab(model_dir: str | Path) -> Vocabulary:
    """Load the vocabulary file of a model directory."""
    vocab_path = Path(model_dir) / VOCAB_FILE
    if not vocab_path.is_file():
        raise ArtifactError(f"artifact missing: {vocab_path}")
    return Vocabulary.from_file(vocab_path)


def save_model(model: EncoderModel, model_dir: str | Path, vocab: Sequence[str]) -> None:
    """Write archive + config + vocab; the exact layout load_model reads."""
    if len(vocab) != model.config.vocab_size:
        raise ConfigError(
            f"config error: vocab has {len(vocab)} tokens, "
            f"config declares vocab_size={model.config.vocab_size}"
        )
    tensors = model_tensors(model)
    _validate_tensors(model.config, tensors)
    model_dir = Path(model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    write_tensors(model_dir / ARCHIVE_FILE, tensors)
    (model_dir / CONFIG_FILE).write_text(
        json.dumps(model.config.to_dict(), indent=2, sort_keys=True) + "\n", "utf-8"
    )
    (model_dir / VOCAB_FILE).write_text("\n".join(vocab) + "\n", "utf-8")


def init_random_encoder(config: EncoderConfig, seed: int) -> EncoderModel:
    """Deterministic random model for (config, seed); a test fixture generator.

    Weight matrices are uniform on [-1/sqrt(d_model), +1/sqrt(d_model)];
    biases start at zero, layernorm scales at one.
    """
    if not isinstance(config, EncoderConfig):
        raise ConfigError("config error: expected an EncoderConfig")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(config.d_model)

    def uniform(*shape):
        return rng.uniform(-bound, bound, size=shape).astype(np.float32)

    d, f = config.d_model, config.d_ff
    zeros = lambda *shape: np.zeros(shape, dtype=np.float32)
    ones = lambda *shape: np.ones(shape, dtype=np.float32)

    layers = []
    token = uniform(config.vocab_size, d)
    position = uniform(config.max_position, d)
    segment = uniform(2, d)
    for _ in range(config.num_layers):
        layers.append(
            LayerWeights(
                wq=uniform(d, d), bq=zeros(d),
                wk=uniform(d, d), bk=zeros(d),
                wv=uniform(d, d), bv=zeros(d),
                wo=uniform(d, d), bo=zeros(d),
                attn_norm_scale=ones(d), attn_norm_bias=zeros(d),
                ffn_w1=uniform(d, f), ffn_b1=zeros(f),
                ffn_w2=uniform(f, d), ffn_b2=zeros(d),
                ffn_norm_scale=ones(d), ffn_norm_bias=zeros(d),
            )
        )
    return EncoderModel(
        config=config,
        token_embeddings=token,
        position_embeddings=position,
        segment_embeddings=segment,
        embed_norm_scale=ones(d),
        embed_norm_bias=zeros(d),
        layers=tuple(layers),
    )
