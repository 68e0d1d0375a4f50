"""Exception types raised across the package."""


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class IngestionError(ValueError):
    """Malformed score table; carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class PipelineError(RuntimeError):
    pass


class UnsupportedPolicyError(ValueError):
    pass


class DisjointSupportError(ValueError):
    pass


class InapplicableConstructionError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


class DegenerateSampleError(ValueError):
    pass
