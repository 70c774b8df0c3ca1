"""Exception hierarchy shared across the engine."""


class GridCodexError(Exception):
    """Base class for all engine errors."""

    code = "internal_error"


class EmptyDocument(GridCodexError):
    code = "empty_document"


class EncodingError(GridCodexError):
    code = "encoding_error"


class BudgetTooSmall(GridCodexError):
    """A single sentence exceeds the chunk token budget."""

    code = "budget_too_small"

    def __init__(self, clause_path, token_count, budget):
        self.clause_path = clause_path
        self.token_count = token_count
        self.budget = budget
        labels = ".".join(label for label, _ in clause_path) or "<root>"
        super().__init__(
            f"sentence of {token_count} tokens under clause {labels} "
            f"exceeds budget {budget}"
        )


class TransportError(GridCodexError):
    code = "transport_error"


class AuthError(GridCodexError):
    code = "auth_error"


class ContextLengthExceeded(GridCodexError):
    code = "context_length_exceeded"

    def __init__(self, message, prompt_tokens=None):
        self.prompt_tokens = prompt_tokens
        super().__init__(message)


class DimMismatch(GridCodexError):
    code = "dim_mismatch"


class EmptyIndex(GridCodexError):
    code = "empty_index"


class CorruptIndex(GridCodexError):
    code = "corrupt_index"


class VersionMismatch(GridCodexError):
    code = "version_mismatch"


class DegenerateInput(GridCodexError):
    code = "degenerate_input"


class EmptyCluster(GridCodexError):
    code = "empty_cluster"


class ParseError(GridCodexError):
    code = "parse_error"

    def __init__(self, message, source=None, line=None):
        self.source = source
        self.line = line
        loc = f" ({source}:{line})" if source else ""
        super().__init__(f"{message}{loc}")


class DuplicateKb(GridCodexError):
    code = "duplicate_kb"


class UnknownRegion(GridCodexError):
    code = "unknown_region"


class UnknownMode(GridCodexError):
    code = "unknown_mode"


class MissingGold(GridCodexError):
    code = "missing_gold"


class ConfigError(GridCodexError):
    code = "config_error"

    def __init__(self, message, field=None):
        self.field = field
        loc = f" (field: {field})" if field else ""
        super().__init__(f"{message}{loc}")
