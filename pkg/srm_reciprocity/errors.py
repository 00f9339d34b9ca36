"""Exception hierarchy shared by the library and the command-line layer."""

from pathlib import Path
from typing import Optional, Union


class SRMError(Exception):
    """Base class for every error raised by srm_reciprocity."""


class DataValidationError(SRMError, ValueError):
    """Input data violate a dataset invariant."""

    def __init__(self, message: str, line: Optional[int] = None,
                 path: Optional[Union[str, Path]] = None):
        self.line = line
        self.path = Path(path) if path is not None else None
        text = message
        if line is not None:
            text = f"{text} at line {line}"
        if path is not None:
            text = f"{text} ({self.path})"
        super().__init__(text)


class UnobservedDyadError(SRMError, LookupError):
    """Requested dyad has no observation in the dataset."""


class DimensionMismatchError(SRMError, ValueError):
    """Latent vectors do not conform to the dataset dimensions."""


class InvalidSpecError(SRMError, ValueError):
    """Simulation or grid specification is invalid."""


class InsufficientDrawsError(SRMError, ValueError):
    """Too few draws or chains for a diagnostic."""


class InitializationError(SRMError, RuntimeError):
    """Sampler could not find a finite starting point."""


class MissingColumnsError(SRMError, KeyError):
    """Posterior table lacks required parameter columns."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "missing columns"


class DiagnosticsFailedError(SRMError):
    """Convergence checks failed under strict mode."""
