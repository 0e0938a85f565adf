"""Dataset ingestion, few-shot sampling, and the timing/accuracy harness.

Timing covers exactly the tokenize -> encode -> mean-pool -> normalize
pipeline over a text list: one untimed warm-up pass, then `runs` timed
passes whose wall-clock seconds are averaged. Model loading and dataset
I/O are never inside the timed region. BLAS parallelism is capped at the
configured thread count for the duration of each harness call.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .classifier import TrainSettings, accuracy, train_head
from .encoder import embed_texts
from .errors import ConfigError, DataError
from .model_io import EncoderModel
from .pruner import PruneConfig
from .tokenizer import Vocabulary

logger = logging.getLogger(__name__)

DEFAULT_RUNS = 7
DEFAULT_THREADS = 4


@dataclass(frozen=True)
class Dataset:
    """Labeled utterances plus a stable label -> id table."""

    name: str
    examples: tuple[tuple[str, str], ...]
    label_index: dict[str, int]

    def texts(self) -> list[str]:
        return [text for text, _ in self.examples]

    def label_ids(self) -> list[int]:
        return [self.label_index[label] for _, label in self.examples]

    @property
    def n_labels(self) -> int:
        return len(self.label_index)


@dataclass(frozen=True)
class TimingReport:
    """Wall-clock seconds of repeated embedding passes over one text list."""

    runs: tuple[float, ...]
    mean_seconds: float
    config_used: PruneConfig | None
    thread_count: int

    def to_json(self) -> dict:
        return {
            "runs": list(self.runs),
            "mean_seconds": self.mean_seconds,
            "config_used": self.config_used.to_json() if self.config_used else None,
            "thread_count": self.thread_count,
        }


def _ingest(rows: list[tuple[int, str, str]], name: str) -> Dataset:
    examples = []
    label_index: dict[str, int] = {}
    for line_no, text, label in rows:
        if not text:
            raise DataError(f"format error: line {line_no}: empty text")
        if not label:
            raise DataError(f"format error: line {line_no}: empty label")
        if label not in label_index:
            label_index[label] = len(label_index)
        examples.append((text, label))
    if not examples:
        raise DataError("empty dataset")
    return Dataset(name=name, examples=tuple(examples), label_index=label_index)


def load_dataset(path: str | Path, format: str | None = None) -> Dataset:
    """Read a CSV (header `text,label`) or JSON-lines ({"text","label"}) file.

    Label ids are assigned by first appearance order. `format` defaults to
    the file extension (.csv / .jsonl).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"format error: no such file {path}")
    if format is None:
        format = {".csv": "csv", ".jsonl": "json-lines", ".json": "json-lines"}.get(path.suffix.lower())
    if format not in ("csv", "json-lines"):
        raise ConfigError(f"config error: unknown dataset format {format!r}")

    rows: list[tuple[int, str, str]] = []
    if format == "csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError("empty dataset") from None
            header = [col.strip().lower() for col in header]
            if "text" not in header or "label" not in header:
                raise DataError("format error: line 1: header must name 'text' and 'label' columns")
            text_col, label_col = header.index("text"), header.index("label")
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) <= max(text_col, label_col):
                    raise DataError(f"format error: line {line_no}: expected {len(header)} columns")
                rows.append((line_no, row[text_col].strip(), row[label_col].strip()))
    else:
        for line_no, line in enumerate(path.read_text("utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                text, label = record["text"], record["label"]
            except (json.JSONDecodeError, TypeError, KeyError) as exc:
                raise DataError(f"format error: line {line_no}: {exc}") from exc
            rows.append((line_no, str(text).strip(), str(label).strip()))
    return _ingest(rows, path.stem)


def _few_shot_indices(dataset: Dataset, k: int, seed: int) -> list[int]:
    if k < 1:
        raise ConfigError(f"config error: k must be >= 1, got {k}")
    rng = np.random.default_rng(seed)
    by_label: dict[str, list[int]] = {label: [] for label in dataset.label_index}
    for idx, (_, label) in enumerate(dataset.examples):
        by_label[label].append(idx)
    selected: list[int] = []
    for label in sorted(dataset.label_index, key=dataset.label_index.get):
        indices = by_label[label]
        if len(indices) < k:
            logger.warning(
                "label %r has only %d examples; using all of them for k=%d", label, len(indices), k
            )
        chosen = rng.choice(len(indices), size=min(k, len(indices)), replace=False)
        selected.extend(indices[i] for i in chosen)
    selected.sort()
    return selected


def sample_few_shot(dataset: Dataset, k: int, seed: int) -> Dataset:
    """k examples per label, uniform without replacement, original order.

    Labels with fewer than k examples contribute everything they have and
    log a warning. Deterministic for (dataset, k, seed).
    """
    selected = _few_shot_indices(dataset, k, seed)
    return Dataset(
        name=dataset.name,
        examples=tuple(dataset.examples[i] for i in selected),
        label_index=dict(dataset.label_index),
    )


def speedup(t_unpruned: float, t_pruned: float) -> float:
    """Relative time saved: (t_unpruned - t_pruned) / t_unpruned."""
    return (t_unpruned - t_pruned) / t_unpruned


def effective_threads(threads: int) -> int:
    """The thread cap actually put in force: requested, clamped to the CPUs.

    The cap is an upper bound; running more BLAS threads than cores
    oversubscribes the machine and corrupts timing measurements.
    """
    if threads < 1:
        raise ConfigError(f"config error: threads must be >= 1, got {threads}")
    return max(1, min(threads, os.cpu_count() or 1))


def time_embeddings(
    model: EncoderModel,
    vocab: Vocabulary,
    texts: Sequence[str],
    prune: PruneConfig | None = None,
    runs: int = DEFAULT_RUNS,
    threads: int = DEFAULT_THREADS,
    max_len: int = 128,
    batch_size: int = 64,
) -> TimingReport:
    """Timed embedding passes: one warm-up, then `runs` measured passes."""
    if not texts:
        raise DataError("empty batch")
    if runs < 1:
        raise ConfigError("config error: runs must be >= 1")
    cap = effective_threads(threads)
    durations = []
    with threadpool_limits(limits=cap):
        embed_texts(model, vocab, texts, prune, max_len, batch_size)  # warm-up
        for _ in range(runs):
            start = time.perf_counter()
            embed_texts(model, vocab, texts, prune, max_len, batch_size)
            durations.append(time.perf_counter() - start)
    return TimingReport(
        runs=tuple(durations),
        mean_seconds=sum(durations) / len(durations),
        config_used=prune,
        thread_count=cap,
    )


def run_experiment(
    model: EncoderModel,
    vocab: Vocabulary,
    train_dataset: Dataset,
    test_dataset: Dataset | None,
    k: int,
    prune: PruneConfig,
    seed: int,
    runs: int = DEFAULT_RUNS,
    threads: int = DEFAULT_THREADS,
    settings: TrainSettings | None = None,
) -> dict:
    """Pruned-vs-unpruned accuracy and embedding time for a k-shot task.

    The head trains on a seeded k-shot sample of `train_dataset`; accuracy
    is measured on `test_dataset` (or, when None, on the unsampled
    remainder of the training file). Embedding time covers the k-shot
    training texts, as a total over the list.
    """
    sampled = _few_shot_indices(train_dataset, k, seed)
    shots = Dataset(
        name=train_dataset.name,
        examples=tuple(train_dataset.examples[i] for i in sampled),
        label_index=dict(train_dataset.label_index),
    )
    if test_dataset is None:
        sampled_set = set(sampled)
        leftovers = [ex for i, ex in enumerate(train_dataset.examples) if i not in sampled_set]
        if not leftovers:
            raise DataError("empty dataset: no held-out examples remain for evaluation")
        test_dataset = Dataset(
            name=f"{train_dataset.name}-holdout",
            examples=tuple(leftovers),
            label_index=dict(train_dataset.label_index),
        )
    missing = sorted(set(test_dataset.label_index) - set(shots.label_index))
    if missing:
        raise DataError(f"format error: test labels {missing} absent from training set")

    train_texts = shots.texts()
    train_labels = [shots.label_index[label] for _, label in shots.examples]
    test_texts = test_dataset.texts()
    test_labels = [shots.label_index[label] for _, label in test_dataset.examples]

    cap = effective_threads(threads)
    report: dict = {
        "dataset": train_dataset.name,
        "k": k,
        "seed": seed,
        "runs": runs,
        "threads": cap,
        "prune": prune.to_json(),
        "train_size": len(train_texts),
        "test_size": len(test_texts),
    }
    with threadpool_limits(limits=cap):
        for tag, config in (("unpruned", None), ("pruned", prune)):
            train_emb = embed_texts(model, vocab, train_texts, config)
            head = train_head(train_emb, train_labels, settings)
            test_emb = embed_texts(model, vocab, test_texts, config)
            report[f"accuracy_{tag}"] = accuracy(head, test_emb, test_labels)
    report["time_unpruned"] = time_embeddings(model, vocab, train_texts, None, runs, threads).to_json()
    report["time_pruned"] = time_embeddings(model, vocab, train_texts, prune, runs, threads).to_json()
    report["accuracy_delta"] = report["accuracy_pruned"] - report["accuracy_unpruned"]
    report["speedup"] = speedup(report["time_unpruned"]["mean_seconds"], report["time_pruned"]["mean_seconds"])
    return report
