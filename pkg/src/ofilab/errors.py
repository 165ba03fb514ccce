"""Exception types shared across the package."""


class OfilabError(Exception):
    """Base class for all package-specific errors."""


class FormatError(OfilabError):
    """Input file does not match the documented CSV schema."""


class CollinearityError(OfilabError):
    """Regressor matrix is rank deficient."""

    def __init__(self, message: str, columns: list[str] | None = None):
        super().__init__(message)
        self.columns = columns or []


class SampleSizeError(OfilabError):
    """Too few observations for the requested fit."""


class EstimationError(OfilabError):
    """A model fit cannot be carried out on the given inputs."""
