"""prunembed: sentence embeddings with attention-guided dynamic token pruning.

The encoder drops low-importance tokens at one early transformer layer so
every later layer processes a shorter sequence, trading a configurable
amount of accuracy for CPU inference speed. The package also ships the
few-shot intent-classification harness used to pick and validate the
pruning configuration.
"""

from .adaptation import IntentTask, SearchResult, SearchSpace, evaluate_config, search
from .bench import Dataset, TimingReport, load_dataset, run_experiment, sample_few_shot, time_embeddings
from .classifier import ClassifierHead, TrainSettings, accuracy, predict, train_head
from .encoder import embed_texts, encode, forward_hidden
from .errors import (
    ArtifactError,
    ConfigError,
    CorruptWeightsError,
    DataError,
    PrunembedError,
    ShapeError,
    VocabError,
)
from .model_io import EncoderConfig, EncoderModel, init_random_encoder, load_model, load_vocab, save_model
from .pruner import PruneConfig, keep_count, select_tokens, token_importance
from .tokenizer import TokenizedBatch, Vocabulary, tokenize

__version__ = "0.1.0"

__all__ = [
    "ArtifactError",
    "ClassifierHead",
    "ConfigError",
    "CorruptWeightsError",
    "DataError",
    "Dataset",
    "EncoderConfig",
    "EncoderModel",
    "IntentTask",
    "PruneConfig",
    "PrunembedError",
    "SearchResult",
    "SearchSpace",
    "ShapeError",
    "TimingReport",
    "TokenizedBatch",
    "TrainSettings",
    "VocabError",
    "Vocabulary",
    "accuracy",
    "embed_texts",
    "encode",
    "evaluate_config",
    "forward_hidden",
    "init_random_encoder",
    "keep_count",
    "load_dataset",
    "load_model",
    "load_vocab",
    "predict",
    "run_experiment",
    "sample_few_shot",
    "save_model",
    "search",
    "select_tokens",
    "time_embeddings",
    "token_importance",
    "tokenize",
    "train_head",
]
