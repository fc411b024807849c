"""Exception hierarchy shared by all layoutkit modules."""

from __future__ import annotations


class LayoutkitError(ValueError):
    """Base class for every data error raised by layoutkit."""


class GeometryError(LayoutkitError):
    """Invalid coordinate values or an undefined coordinate operation."""


class LayoutError(LayoutkitError):
    """Inconsistent TextBlock / Layout structure."""


class StorageError(LayoutkitError):
    """Malformed serialized data or an unsupported file format."""


class OcrError(LayoutkitError):
    """Malformed OCR engine output."""


class RegistryError(LayoutkitError):
    """Bad model URI or registry index."""


class PipelineError(LayoutkitError):
    """Invalid pipeline input or parameters."""
