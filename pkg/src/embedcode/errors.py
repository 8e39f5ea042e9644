"""Exception hierarchy shared by all engine modules.

Every error carries a process exit code used by the CLI (0 ok, 2 validation,
3 provider/transport, 4 integrity/conflict) and a short machine-readable code
used in API error envelopes.
"""
from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine failures."""

    exit_code = 2
    code = "engine_error"


class ValidationError(EngineError):
    """Bad user input: unknown ids, out-of-range parameters, empty text."""

    code = "validation"


class ParseError(ValidationError):
    """Malformed CSV/JSONL input; message includes the offending line."""

    code = "parse"


class ConfigurationError(ValidationError):
    """Invalid codebook, provider, or hyperparameter configuration."""

    code = "configuration"


class ShapeError(ValidationError):
    """Vector dimension mismatch between operands."""

    code = "shape"


class DegenerateVectorError(ValidationError):
    """A zero-norm vector where a direction is required."""

    code = "degenerate_vector"


class ConflictError(EngineError):
    """Duplicate ids or other uniqueness violations."""

    exit_code = 4
    code = "conflict"


class StaleRevisionError(ConflictError):
    """A mutation carried a revision that is no longer current."""

    code = "stale_revision"


class IntegrityError(EngineError):
    """Corrupt stored data: cache records, dimension drift, bad manifests."""

    exit_code = 4
    code = "integrity"


class ComparabilityError(IntegrityError):
    """Vectors from different embedding models were mixed."""

    code = "comparability"


class DivergenceError(IntegrityError):
    """Non-finite loss or gradient during an optimization run."""

    code = "divergence"


class TransportError(EngineError):
    """Embedding provider unreachable after retries."""

    exit_code = 3
    code = "transport"
