"""Exception types raised across the toolkit."""


class GlobalTraitError(Exception):
    """Base class for all toolkit errors."""


class VecFormatError(GlobalTraitError, ValueError):
    """Malformed ``.vec`` header or row."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(GlobalTraitError, ValueError):
    """A corpus manifest record does not match the expected schema."""


class OrthogonalityError(GlobalTraitError, ValueError):
    """A matrix violates the orthogonality tolerance of an OrthogonalMap."""


class DivergenceError(GlobalTraitError, RuntimeError):
    """Training or orthogonalization produced growing or non-finite values."""


class MissingArtifactError(GlobalTraitError, FileNotFoundError):
    """A pipeline input is missing; ``step`` names the CLI verb producing it."""

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"{message} (run `globaltrait {step}` first)"
        super().__init__(message)


class SpecError(GlobalTraitError, ValueError):
    """Invalid generator or configuration parameters."""


class StaleArtifactError(GlobalTraitError):
    """An input artifact no longer matches the digests its producer recorded."""

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"{message} (rerun `globaltrait {step}` or pass --force)"
        super().__init__(message)
