"""Offline converter from pretrained BERT-style checkpoints to the
prunembed model-directory layout."""

from .export import DtypeError, ExportError, ExportManifest, MappingError, default_mapping, export

__all__ = [
    "DtypeError",
    "ExportError",
    "ExportManifest",
    "MappingError",
    "default_mapping",
    "export",
]
