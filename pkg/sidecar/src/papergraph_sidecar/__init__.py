"""Embedding exporter for the papergraph engine.

Reads the segment and query files the engine emits, encodes their texts
(with real pretrained encoders or a deterministic fake), and writes EMB1
embedding tables keyed by the engine's id scheme. The package deliberately
shares no code with the engine: the EMB1 byte format and the id scheme are
the entire contract between the two.
"""

from __future__ import annotations

__version__ = "0.1.0"

__all__ = [
    "EmptyInput",
    "EncoderLoadFailure",
    "SidecarError",
    "__version__",
]


class SidecarError(Exception):
    """Base class for all sidecar failures."""


class EmptyInput(SidecarError):
    """The input yielded no texts to encode."""


class EncoderLoadFailure(SidecarError):
    """A pretrained encoder could not be imported or loaded."""
