"""Command line for the checkpoint exporter.

    prunembed-export --source <checkpoint-id-or-path> --out <dir> [--mapping <json>]

Writes model.safetensors, config.json, vocab.txt, and checksums.txt into
the output directory. Exit codes: 0 ok, 2 bad input or mapping, 3 the
converted artifact failed the engine's validation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .export import ExportError, ExportManifest, default_mapping, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prunembed-export", description=__doc__)
    parser.add_argument("--source", required=True, help="checkpoint id or local directory")
    parser.add_argument("--out", required=True, help="output model directory")
    parser.add_argument("--mapping", default=None, help="tensor name-mapping JSON (defaults to the packaged table)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    mapping = default_mapping()
    if args.mapping is not None:
        mapping = json.loads(Path(args.mapping).read_text("utf-8"))
    try:
        out_dir = export(ExportManifest(source=args.source, out_dir=Path(args.out), mapping=mapping))
    except ExportError as exc:
        print(f"prunembed-export: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"prunembed-export: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # engine validation or checkpoint load failure
        print(f"prunembed-export: conversion failed: {exc}", file=sys.stderr)
        return 3
    print(str(out_dir))
    return 0


if __name__ == "__main__":
    sys.exit(main())
