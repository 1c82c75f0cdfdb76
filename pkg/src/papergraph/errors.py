"""Exception types shared across the pipeline stages."""


class PapergraphError(Exception):
    """Base class for all engine errors."""


class EmptyDocument(PapergraphError):
    """No section of the document yielded a passage."""


class IoFailure(PapergraphError):
    """A file could not be read or written."""


class BadMagic(PapergraphError):
    """A binary file does not start with the expected magic bytes."""


class DimMismatch(PapergraphError):
    """Vector dimensions disagree, or a binary file is truncated/oversized."""


class NonFiniteValue(PapergraphError):
    """An embedding vector contains NaN or infinity."""


class DuplicateId(PapergraphError):
    """The same id appears twice in an embedding file."""


class MissingEmbedding(PapergraphError):
    """A required embedding id is absent from the table."""

    def __init__(self, missing_id: str):
        super().__init__(f"missing embedding: {missing_id}")
        self.missing_id = missing_id


class ShapeMismatch(PapergraphError):
    """Array shapes are inconsistent with the model or graph."""


class LabelOutOfRange(PapergraphError):
    """A label references a passage id not present in the graph."""


class EmptyDataset(PapergraphError):
    """Training was asked to run on an empty dataset."""


class EmptySelection(PapergraphError):
    """Prompt assembly received no passages."""


class UnknownPassageId(PapergraphError):
    """A selection references a passage id the document does not contain."""


class DocMismatch(PapergraphError):
    """Two per-document structures reference different documents."""
