"""Convert a pretrained BERT-style checkpoint into a prunembed model dir.

Reads a local or hub checkpoint through transformers, renames every tensor
via the checked-in mapping table (new checkpoints need data changes only),
normalizes to 32-bit floats, and writes the three files the inference
engine consumes: model.safetensors, config.json, vocab.txt, plus a
checksums.txt with SHA-256 digests. The result is round-trip validated by
the engine's own loader, and serialization is deterministic so re-exports
are byte-identical. Single-threaded batch tool.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

ARCHIVE_FILE = "model.safetensors"
CONFIG_FILE = "config.json"
VOCAB_FILE = "vocab.txt"
CHECKSUM_FILE = "checksums.txt"


class ExportError(Exception):
    """Base class for exporter failures."""


class MappingError(ExportError):
    """A required source tensor is absent or a target is duplicated."""


class DtypeError(ExportError):
    """A source tensor has a non-floating dtype."""


def default_mapping() -> dict:
    with resources.files("prunembed_export").joinpath("mapping.json").open("r") as fh:
        return json.load(fh)


@dataclass
class ExportManifest:
    """What to convert: source checkpoint, output dir, tensor name mapping."""

    source: str
    out_dir: Path
    mapping: dict = field(default_factory=default_mapping)


def _to_float32(name: str, tensor) -> np.ndarray:
    """Cast rule: floating dtypes up/down-cast to float32 (round to
    nearest for float64 sources); anything else is an error."""
    if not tensor.is_floating_point():
        raise DtypeError(f"dtype error: tensor '{name}' has dtype {tensor.dtype}")
    return tensor.detach().to(dtype=_torch().float32).cpu().numpy()


def _torch():
    import torch

    return torch


def _resolve_mapping(mapping: dict, num_layers: int) -> dict[str, dict]:
    """Expand {i} templates into one entry per source tensor name."""
    resolved: dict[str, dict] = {}
    for source, spec in mapping.get("embeddings", {}).items():
        resolved[source] = {"target": spec["target"], "transpose": bool(spec.get("transpose", False))}
    for template, spec in mapping.get("per_layer", {}).items():
        for i in range(num_layers):
            resolved[template.format(i=i)] = {
                "target": spec["target"].format(i=i),
                "transpose": bool(spec.get("transpose", False)),
            }
    targets = [entry["target"] for entry in resolved.values()]
    duplicates = {t for t in targets if targets.count(t) > 1}
    if duplicates:
        raise MappingError(f"mapping error: duplicate targets {sorted(duplicates)}")
    return resolved


def _write_archive(path: Path, tensors: dict[str, np.ndarray]) -> None:
    # Deterministic safetensors serialization: sorted names, compact JSON
    # header padded to an 8-byte boundary, little-endian float32 payload.
    entries: dict[str, dict] = {}
    blobs: list[bytes] = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        blob = arr.tobytes()
        entries[name] = {
            "dtype": "F32",
            "shape": list(arr.shape),
            "data_offsets": [offset, offset + len(blob)],
        }
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(entries, sort_keys=True, separators=(",", ":")).encode("utf-8")
    header += b" " * (-(8 + len(header)) % 8)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def _vocab_lines(tokenizer) -> list[str]:
    vocab = tokenizer.get_vocab()
    lines = [None] * len(vocab)
    for token, idx in vocab.items():
        if not 0 <= idx < len(vocab) or lines[idx] is not None:
            raise MappingError(f"mapping error: vocabulary ids are not contiguous at {idx}")
        lines[idx] = token
    return lines


def _write_checksums(out_dir: Path) -> None:
    lines = []
    for name in sorted((ARCHIVE_FILE, CONFIG_FILE, VOCAB_FILE)):
        digest = hashlib.sha256((out_dir / name).read_bytes()).hexdigest()
        lines.append(f"{digest}  {name}")
    (out_dir / CHECKSUM_FILE).write_text("\n".join(lines) + "\n", "utf-8")


def export(manifest: ExportManifest) -> Path:
    """Run the conversion; returns the output directory.

    The written directory is validated by loading it with the inference
    engine's loader, which enforces tensor presence, shapes, and
    finiteness.
    """
    from transformers import AutoModel, AutoTokenizer

    model = AutoModel.from_pretrained(manifest.source)
    model.eval()
    tokenizer = AutoTokenizer.from_pretrained(manifest.source)
    state = model.state_dict()

    hf_config = model.config
    config = {
        "num_layers": int(hf_config.num_hidden_layers),
        "num_heads": int(hf_config.num_attention_heads),
        "d_model": int(hf_config.hidden_size),
        "d_k": int(hf_config.hidden_size) // int(hf_config.num_attention_heads),
        "d_ff": int(hf_config.intermediate_size),
        "vocab_size": int(hf_config.vocab_size),
        "max_position": int(hf_config.max_position_embeddings),
        "layernorm_eps": float(hf_config.layer_norm_eps),
    }

    resolved = _resolve_mapping(manifest.mapping, config["num_layers"])
    tensors: dict[str, np.ndarray] = {}
    for source_name, entry in resolved.items():
        if source_name not in state:
            raise MappingError(f"mapping error: source tensor '{source_name}' not in checkpoint")
        arr = _to_float32(source_name, state[source_name])
        if entry["transpose"]:
            arr = np.ascontiguousarray(arr.T)
        tensors[entry["target"]] = arr

    vocab_lines = _vocab_lines(tokenizer)
    if len(vocab_lines) != config["vocab_size"]:
        raise MappingError(
            f"mapping error: tokenizer has {len(vocab_lines)} tokens, "
            f"checkpoint config declares {config['vocab_size']}"
        )

    out_dir = Path(manifest.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_archive(out_dir / ARCHIVE_FILE, tensors)
    (out_dir / CONFIG_FILE).write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", "utf-8")
    (out_dir / VOCAB_FILE).write_text("\n".join(vocab_lines) + "\n", "utf-8")
    _write_checksums(out_dir)

    from prunembed.model_io import load_model

    load_model(out_dir)  # round-trip validation: shapes + finiteness
    return out_dir
