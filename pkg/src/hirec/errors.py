"""Exception types shared across the engine."""


class HirecError(Exception):
    """Base class for all engine errors."""


class BackendUnavailable(HirecError):
    """A model backend could not be reached after retries."""


class DimensionMismatch(HirecError):
    """An embedding service returned vectors of the wrong dimension."""


class MalformedResponse(HirecError):
    """A backend returned a response that violates its contract."""


class EmptyResponse(HirecError):
    """A chat backend produced no text (or a scripted queue ran dry)."""


class ParseError(HirecError):
    """An input file could not be parsed.

    Carries the 1-based line number when known.
    """

    def __init__(self, message: str, line_no: int | None = None):
        super().__init__(message)
        self.line_no = line_no


class DuplicateDocId(HirecError):
    """Two corpus records share a doc_id."""

    def __init__(self, doc_id: str):
        super().__init__(f"duplicate doc_id: {doc_id}")
        self.doc_id = doc_id


class EmptyCorpus(HirecError):
    """The corpus file contained no documents."""


class EmptyDocument(HirecError):
    """A document has no usable page text."""


class CorpusEmpty(HirecError):
    """A pipeline run was attempted against an empty corpus."""


class GenerationFailed(HirecError):
    """The answer-generation chat call failed."""


class ExecutionFailed(HirecError):
    """A generated program failed even after the repair retry."""

    def __init__(self, message: str, execution=None):
        super().__init__(message)
        self.execution = execution
