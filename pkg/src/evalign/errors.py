"""Exception hierarchy for the toolkit.

File loaders and numeric routines raise subclasses of :class:`EvalignError`.
Graph validation does not raise; it returns reports (see ``types.validate_graph``).
Most classes double-subclass a builtin (ValueError, KeyError, ...) so callers
that only know the stdlib taxonomy still catch the right thing.
"""

from __future__ import annotations


class EvalignError(Exception):
    """Base class for all toolkit errors."""


class FormatError(EvalignError, ValueError):
    """File content violates its declared format."""


class CorpusError(FormatError):
    """Malformed corpus line. Carries the 1-based line number when known."""

    def __init__(
        self,
        message: str,
        *,
        line: int | None = None,
        record_id: str | None = None,
        field: str | None = None,
    ) -> None:
        parts = []
        if line is not None:
            parts.append(f"line {line}")
        if record_id is not None:
            parts.append(f"record {record_id!r}")
        if field is not None:
            parts.append(f"field {field!r}")
        prefix = ", ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line = line
        self.record_id = record_id
        self.field = field


class DataError(EvalignError, ValueError):
    """Structurally valid container holding invalid values (NaN, negative counts, ...)."""


class MissingEmbeddingError(EvalignError, KeyError):
    """An embedding table lookup failed; ``key`` names the missing entry."""

    def __init__(self, key: str) -> None:
        super().__init__(key)
        self.key = key

    def __str__(self) -> str:
        return f"no embedding stored for key {self.key!r}"


class UndefinedSimilarityError(EvalignError, ValueError):
    """Cosine similarity is undefined when either vector has zero length."""


class NumericalUnderflowError(EvalignError, ArithmeticError):
    """exp(-C/gamma) underflowed to an all-zero row or column.

    Use a larger gamma or the log-domain solver (``sinkhorn(..., log_domain=True)``).
    """


class TemplateNotFoundError(EvalignError, KeyError):
    """The ontology has no template entry for the requested event type."""

    def __init__(self, type_id: str) -> None:
        super().__init__(type_id)
        self.type_id = type_id

    def __str__(self) -> str:
        return f"no template registered for event type {self.type_id!r}"


class RotationNotApplicable(EvalignError):
    """Argument rotation needs at least two arguments."""


class CannotEditError(EvalignError, ValueError):
    """Caption editing needs pairwise non-overlapping trigger and argument spans."""


class NoEventError(EvalignError, ValueError):
    """The record carries no event annotation."""


class BatchTooSmallError(EvalignError, ValueError):
    """Contrastive batches need at least two items for in-batch negatives."""


class UnregisteredTokenError(EvalignError, KeyError):
    """A continuous prompt references a reserved token the encoder does not hold."""

    def __init__(self, token_id: str) -> None:
        super().__init__(token_id)
        self.token_id = token_id

    def __str__(self) -> str:
        return f"reserved token {self.token_id!r} is not registered with the encoder"


class CompletionTransportError(EvalignError, ConnectionError):
    """A completion request failed in transit; safe to retry."""


class CompletionError(EvalignError, RuntimeError):
    """The completion endpoint kept failing after the configured retries."""


class DivergedError(EvalignError, ArithmeticError):
    """A training loss term became non-finite; the message names the first bad term."""
