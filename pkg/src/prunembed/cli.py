"""Command-line entry point tying the pipeline together.

Subcommands: embed, train-eval, search, bench. Machine-parseable JSON goes
to stdout (or --out); diagnostics go to stderr. Exit codes: 0 ok, 2 input
error, 3 model error, 4 label-consistency error. The --threads flag is a
hard cap on all internal parallelism. No environment variables are read;
everything is explicit for reproducibility.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import bench as bench_mod
from .adaptation import IntentTask, SearchSpace, evaluate_config, search
from .classifier import train_head, weighted_metrics
from .encoder import embed_texts
from .errors import PrunembedError
from .model_io import load_model, load_vocab
from .pruner import PruneConfig

DEFAULT_PRUNE = PruneConfig(s=15, q=0.8, l=1)

EXIT_INPUT = 2
EXIT_MODEL = 3
EXIT_LABELS = 4


class _ModelError(Exception):
    """Model artifacts failed to load."""


class _LabelError(Exception):
    """Evaluation labels are inconsistent with training labels."""


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model-dir", required=True, help="directory with model.safetensors, config.json, vocab.txt")
    common.add_argument("--prune-s", type=int, default=DEFAULT_PRUNE.s, help="minimum token count for pruning")
    common.add_argument("--prune-q", type=float, default=DEFAULT_PRUNE.q, help="fraction of tokens kept")
    common.add_argument("--prune-l", type=int, default=DEFAULT_PRUNE.l, help="1-based layer index for pruning")
    common.add_argument("--no-prune", action="store_true", help="disable token pruning")
    common.add_argument("--threads", type=int, default=4, help="hard cap on internal parallelism")
    common.add_argument("--seed", type=int, default=0, help="seed for any sampling")
    common.add_argument("--out", default=None, help="write JSON here instead of stdout")

    parser = argparse.ArgumentParser(prog="prunembed", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_embed = sub.add_parser("embed", parents=[common], help="embed one text per input line")
    p_embed.add_argument("input", help="text file, one utterance per line")

    p_train = sub.add_parser("train-eval", parents=[common], help="train a head and report test metrics")
    p_train.add_argument("train", help="training dataset (csv or jsonl)")
    p_train.add_argument("test", help="test dataset (csv or jsonl)")

    p_search = sub.add_parser("search", parents=[common], help="grid-search the pruning configuration")
    p_search.add_argument("manifest", help='JSON manifest: {"tasks": [{"name", "train", "dev"}]}')
    p_search.add_argument("space", help='JSON search space: {"s_values"|"s_range", "q_values"|"q_range", ...}')
    p_search.add_argument("--metric", choices=("accuracy", "weighted_f1"), default="accuracy")

    p_bench = sub.add_parser("bench", parents=[common], help="pruned-vs-unpruned accuracy and timing")
    p_bench.add_argument("dataset", help="training dataset (csv or jsonl)")
    p_bench.add_argument("--test-file", default=None, help="test dataset; defaults to the unsampled remainder")
    p_bench.add_argument("-k", "--shots", type=int, default=3, help="examples per label")
    p_bench.add_argument("--runs", type=int, default=bench_mod.DEFAULT_RUNS, help="timed passes per condition")
    return parser


def _prune_from_args(args) -> PruneConfig | None:
    if args.no_prune:
        return None
    return PruneConfig(s=args.prune_s, q=args.prune_q, l=args.prune_l)


def _load(args):
    try:
        model = load_model(args.model_dir)
        vocab = load_vocab(args.model_dir)
    except PrunembedError as exc:
        raise _ModelError(str(exc)) from exc
    return model, vocab


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n", "utf-8")


def _labels_to_ids(dataset: bench_mod.Dataset, index: dict[str, int]) -> list[int]:
    missing = sorted({label for _, label in dataset.examples if label not in index})
    if missing:
        raise _LabelError(f"labels {missing} absent from the training set")
    return [index[label] for _, label in dataset.examples]


def cmd_embed(args) -> None:
    model, vocab = _load(args)
    prune = _prune_from_args(args)
    texts = Path(args.input).read_text("utf-8").splitlines()
    embeddings = embed_texts(model, vocab, texts, prune)
    lines = [
        json.dumps({"text": text, "embedding": [float(v) for v in row]})
        for text, row in zip(texts, embeddings)
    ]
    _emit("\n".join(lines), args.out)


def cmd_train_eval(args) -> None:
    model, vocab = _load(args)
    prune = _prune_from_args(args)
    train_set = bench_mod.load_dataset(args.train)
    test_set = bench_mod.load_dataset(args.test)
    train_ids = train_set.label_ids()
    test_ids = _labels_to_ids(test_set, train_set.label_index)
    head = train_head(
        embed_texts(model, vocab, train_set.texts(), prune),
        train_ids,
        label_names=sorted(train_set.label_index, key=train_set.label_index.get),
    )
    metrics = weighted_metrics(head, embed_texts(model, vocab, test_set.texts(), prune), test_ids)
    _emit(json.dumps(metrics, indent=2), args.out)


def _load_task(entry: dict) -> IntentTask:
    train_set = bench_mod.load_dataset(entry["train"])
    dev_set = bench_mod.load_dataset(entry["dev"])
    train = list(zip(train_set.texts(), train_set.label_ids()))
    dev = list(zip(dev_set.texts(), _labels_to_ids(dev_set, train_set.label_index)))
    return IntentTask(name=str(entry.get("name", train_set.name)), train=train, dev=dev)


def cmd_search(args) -> None:
    model, vocab = _load(args)
    manifest = json.loads(Path(args.manifest).read_text("utf-8"))
    if not isinstance(manifest, dict) or not manifest.get("tasks"):
        raise PrunembedError("format error: manifest must contain a non-empty 'tasks' list")
    tasks = [_load_task(entry) for entry in manifest["tasks"]]
    space = SearchSpace.from_json(json.loads(Path(args.space).read_text("utf-8")))
    result = search(model, vocab, space, tasks, metric=args.metric)
    _emit(json.dumps(result.to_json(), indent=2), args.out)


def cmd_bench(args) -> None:
    model, vocab = _load(args)
    prune = _prune_from_args(args)
    if prune is None:
        raise PrunembedError("config error: bench compares pruned vs unpruned; do not pass --no-prune")
    train_set = bench_mod.load_dataset(args.dataset)
    test_set = bench_mod.load_dataset(args.test_file) if args.test_file else None
    if test_set is not None:
        _labels_to_ids(test_set, train_set.label_index)
    try:
        report = bench_mod.run_experiment(
            model, vocab, train_set, test_set, args.shots, prune, args.seed,
            runs=args.runs, threads=args.threads,
        )
    except PrunembedError as exc:
        if "absent from training set" in str(exc):
            raise _LabelError(str(exc)) from exc
        raise
    _emit(json.dumps(report, indent=2), args.out)


_COMMANDS = {
    "embed": cmd_embed,
    "train-eval": cmd_train_eval,
    "search": cmd_search,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with threadpool_limits(limits=bench_mod.effective_threads(args.threads)):
            _COMMANDS[args.command](args)
    except _ModelError as exc:
        print(f"prunembed: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except _LabelError as exc:
        print(f"prunembed: label error: {exc}", file=sys.stderr)
        return EXIT_LABELS
    except (PrunembedError, OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        print(f"prunembed: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
