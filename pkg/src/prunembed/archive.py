"""Reader/writer for the safetensors tensor-archive container.

Layout: an 8-byte little-endian unsigned header length, a JSON header
mapping tensor name -> {"dtype", "shape", "data_offsets"}, then the raw
row-major little-endian payload. Only float32 ("F32") tensors are
supported. Serialization is deterministic: names are sorted, the JSON
header uses sorted keys and compact separators, and the header is padded
with spaces so the payload starts on an 8-byte boundary. Identical
tensors therefore always produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ArtifactError

F32 = "F32"
_ITEM_SIZE = 4


def write_tensors(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    """Serialize `tensors` (cast to little-endian float32) to `path`."""
    entries: dict[str, dict] = {}
    blobs: list[bytes] = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        blob = arr.tobytes()
        entries[name] = {
            "dtype": F32,
            "shape": list(arr.shape),
            "data_offsets": [offset, offset + len(blob)],
        }
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(entries, sort_keys=True, separators=(",", ":")).encode("utf-8")
    header += b" " * (-(8 + len(header)) % 8)  # align payload to 8 bytes
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_tensors(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a tensor archive, returning name -> float32 array.

    Any violation of the container format raises ArtifactError; this
    function never returns a partially decoded archive.
    """
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"artifact missing: {path}")
    raw = path.read_bytes()
    if len(raw) < 8:
        raise ArtifactError(f"artifact missing: {path} is truncated")
    (header_len,) = struct.unpack("<Q", raw[:8])
    if 8 + header_len > len(raw):
        raise ArtifactError(f"artifact missing: {path} header exceeds file size")
    try:
        entries = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"artifact missing: {path} has an unreadable header: {exc}") from exc
    if not isinstance(entries, dict):
        raise ArtifactError(f"artifact missing: {path} header is not a JSON object")

    payload = raw[8 + header_len :]
    tensors: dict[str, np.ndarray] = {}
    for name, meta in entries.items():
        if name == "__metadata__":
            continue
        try:
            dtype = meta["dtype"]
            shape = tuple(int(d) for d in meta["shape"])
            start, end = (int(v) for v in meta["data_offsets"])
        except (TypeError, KeyError, ValueError) as exc:
            raise ArtifactError(f"artifact missing: bad entry for tensor '{name}': {exc}") from exc
        if dtype != F32:
            raise ArtifactError(f"artifact missing: tensor '{name}' has unsupported dtype {dtype!r}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if any(d < 0 for d in shape):
            raise ArtifactError(f"artifact missing: tensor '{name}' has a negative dimension")
        if end - start != count * _ITEM_SIZE or start < 0 or end > len(payload):
            raise ArtifactError(f"artifact missing: tensor '{name}' has inconsistent data offsets")
        tensors[name] = np.frombuffer(payload, dtype="<f4", count=count, offset=start).reshape(shape)
    return tensors
