"""Exception taxonomy shared across the package.

CLI exit-code mapping: ConfigError -> 2, DataError -> 3, ProviderError -> 4.
"""


class RubricLearnError(Exception):
    """Base class for all package errors."""


class ConfigError(RubricLearnError):
    """Invalid or drifted configuration."""


class ConfigDriftError(ConfigError):
    """Resume attempted with a config that does not match the run manifest."""


class DataError(RubricLearnError):
    """Invalid input data."""


class IngestionError(DataError):
    """Malformed dataset file; message names the offending line."""


class SplitError(DataError):
    """Split cannot be produced (too small, inconsistent inputs)."""


class PairingError(DataError):
    """Responses and score records do not pair up by response_id."""


class DegenerateDistributionError(DataError):
    """QWK undefined: both raters constant."""


class ReservedHeaderError(DataError):
    """Text contains the reserved skill-composition header line."""


class ProviderError(RubricLearnError):
    """Chat-completion provider failure."""


class TransportError(ProviderError):
    """Retries exhausted; carries the last status or network failure."""

    def __init__(self, message: str, last_status: int | None = None):
        super().__init__(message)
        self.last_status = last_status


class EmptyCompletionError(ProviderError):
    """Provider returned an empty assistant message."""


class MockScriptError(ProviderError):
    """Mock provider received a request no script rule matches."""


class CheckpointError(RubricLearnError):
    """Run directory checkpoint missing or corrupt."""


class MissingArtifactError(RubricLearnError):
    """An evaluation requires an artifact that is not available."""
