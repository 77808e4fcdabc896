"""Exception types raised across the package."""


class DatasetError(ValueError):
    """Raised when a dataset cannot be ingested or fails validation."""


class PositivityError(ValueError):
    """Raised when a treatment probability leaves the open interval (0, 1)."""


class SamplingError(RuntimeError):
    """Raised when a subsampler cannot produce a usable dataset."""


class EstimationError(RuntimeError):
    """Raised when an estimator's preconditions fail on the given data."""


class ConfigError(ValueError):
    """Raised for malformed or inconsistent benchmark configuration."""


class BenchmarkAborted(RuntimeError):
    """Raised when too many seeds of a benchmark run fail."""

    def __init__(self, n_failed, n_total):
        self.n_failed = n_failed
        self.n_total = n_total
        super().__init__(f"{n_failed} of {n_total} seed runs failed (more than 10%)")
