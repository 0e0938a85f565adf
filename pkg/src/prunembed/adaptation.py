"""Post-training multitask search for the best (s, q, l) pruning policy.

Every combination in the search space is evaluated on every holdout task
(embed with pruning, train a head, score the dev split); the winner
maximizes the unweighted mean metric across tasks and is then applied
unchanged to all future tasks. The grid is exhaustive by design: the
objective is an argmax over an explicit finite set and realistic spaces
stay small (around a hundred configs).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .classifier import TrainSettings, accuracy, train_head, weighted_metrics
from .encoder import embed_texts
from .errors import ConfigError, DataError, PrunembedError
from .model_io import EncoderModel
from .pruner import PruneConfig
from .tokenizer import Vocabulary

DEFAULT_Q_STEP = 0.05
METRICS = ("accuracy", "weighted_f1")


@dataclass(frozen=True)
class IntentTask:
    """A named (train, dev) pair of (text, label id) examples."""

    name: str
    train: tuple[tuple[str, int], ...]
    dev: tuple[tuple[str, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "train", tuple((str(t), int(l)) for t, l in self.train))
        object.__setattr__(self, "dev", tuple((str(t), int(l)) for t, l in self.dev))
        if not self.train or not self.dev:
            raise DataError(f"task '{self.name}': empty split")
        train_labels = {label for _, label in self.train}
        missing = sorted({label for _, label in self.dev} - train_labels)
        if missing:
            raise DataError(f"task '{self.name}': dev labels {missing} missing from train")


@dataclass(frozen=True)
class SearchSpace:
    s_values: tuple[int, ...]
    q_values: tuple[float, ...]
    l_values: tuple[int, ...]

    def __post_init__(self):
        if not (self.s_values and self.q_values and self.l_values):
            raise ConfigError("config error: search space lists must be non-empty")
        for s in self.s_values:
            if s < 1:
                raise ConfigError(f"config error: s must be >= 1, got {s}")
        for q in self.q_values:
            if not 0.0 < q <= 1.0:
                raise ConfigError(f"config error: q must be in (0, 1], got {q}")
        for l in self.l_values:
            if l < 1:
                raise ConfigError(f"config error: l must be >= 1, got {l}")

    def configs(self) -> list[PruneConfig]:
        """Cartesian product in deterministic (s, q, l) order."""
        return [
            PruneConfig(s=s, q=q, l=l)
            for s in self.s_values
            for q in self.q_values
            for l in self.l_values
        ]

    def size(self) -> int:
        return len(self.s_values) * len(self.q_values) * len(self.l_values)

    @classmethod
    def from_json(cls, data: dict) -> "SearchSpace":
        """Accepts explicit `*_values` lists or inclusive `*_range` pairs.

        Ranges step by 1 for s and l and by `q_step` (default 0.05) for q.
        """

        def ints(key):
            if f"{key}_values" in data:
                return tuple(int(v) for v in data[f"{key}_values"])
            if f"{key}_range" in data:
                lo, hi = (int(v) for v in data[f"{key}_range"])
                return tuple(range(lo, hi + 1))
            raise ConfigError(f"config error: search space needs {key}_values or {key}_range")

        if "q_values" in data:
            q_values = tuple(float(v) for v in data["q_values"])
        elif "q_range" in data:
            lo, hi = (float(v) for v in data["q_range"])
            step = float(data.get("q_step", DEFAULT_Q_STEP))
            if step <= 0:
                raise ConfigError("config error: q_step must be > 0")
            count = int(round((hi - lo) / step))
            q_values = tuple(round(lo + i * step, 10) for i in range(count + 1) if lo + i * step <= hi + 1e-9)
        else:
            raise ConfigError("config error: search space needs q_values or q_range")
        return cls(s_values=ints("s"), q_values=q_values, l_values=ints("l"))


@dataclass(frozen=True)
class SearchResult:
    """best config plus the full table of (config, per-task metrics, mean)."""

    best: PruneConfig
    table: tuple[tuple[PruneConfig, tuple[float, ...], float], ...]

    def to_json(self) -> dict:
        return {
            "best": self.best.to_json(),
            "table": [
                {"config": config.to_json(), "per_task": list(per_task), "mean": mean}
                for config, per_task, mean in self.table
            ],
        }


def evaluate_config(
    model: EncoderModel,
    vocab: Vocabulary,
    config: PruneConfig,
    task: IntentTask,
    metric: str = "accuracy",
    settings: TrainSettings | None = None,
) -> float:
    """Embed the task with `config`, train a head, score the dev split."""
    if metric not in METRICS:
        raise ConfigError(f"config error: metric must be one of {METRICS}")
    try:
        train_texts = [text for text, _ in task.train]
        train_labels = [label for _, label in task.train]
        dev_texts = [text for text, _ in task.dev]
        dev_labels = [label for _, label in task.dev]
        train_emb = embed_texts(model, vocab, train_texts, prune=config)
        head = train_head(train_emb, train_labels, settings)
        dev_emb = embed_texts(model, vocab, dev_texts, prune=config)
        if metric == "accuracy":
            return accuracy(head, dev_emb, dev_labels)
        return weighted_metrics(head, dev_emb, dev_labels)["weighted_f1"]
    except PrunembedError as exc:
        raise type(exc)(f"task '{task.name}': {exc}") from exc


def search(
    model: EncoderModel,
    vocab: Vocabulary,
    space: SearchSpace,
    tasks: Sequence[IntentTask],
    metric: str = "accuracy",
    settings: TrainSettings | None = None,
    evaluator: Callable[[PruneConfig, IntentTask], float] | None = None,
) -> SearchResult:
    """Exhaustive grid search maximizing the mean metric over tasks.

    Ties break toward higher q, then higher s, then lower l. Any task
    failure aborts the whole search; nothing is skipped silently.
    """
    if not tasks:
        raise DataError("empty task list")
    if evaluator is None:
        evaluator = lambda config, task: evaluate_config(model, vocab, config, task, metric, settings)
    table = []
    for config in space.configs():
        per_task = tuple(float(evaluator(config, task)) for task in tasks)
        table.append((config, per_task, sum(per_task) / len(per_task)))
    best = max(table, key=lambda row: (row[2], row[0].q, row[0].s, -row[0].l))[0]
    return SearchResult(best=best, table=tuple(table))
