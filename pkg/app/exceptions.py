class NVCycleError(Exception):
    """Base exception for all nvcycle errors"""


class DomainError(NVCycleError, ValueError):
    """Raised when a physical input lies outside the model's domain."""


class CapacityError(NVCycleError):
    """Raised when an enumeration or factorial cap would be exceeded."""

    def __init__(self, message: str, suggestion: str | None = None):
        super().__init__(message if not suggestion else f"{message} ({suggestion})")
        self.suggestion = suggestion


class NumericError(NVCycleError):
    """Raised when a numerical routine fails to converge."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class AnalysisError(NVCycleError):
    """Raised when a photon trace cannot be analysed."""


class InsufficientDataError(AnalysisError):
    """Raised when too few dwells are available for a rate estimate."""


class FormatError(NVCycleError):
    """Raised when an input file cannot be parsed or validated."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class InstabilityError(NVCycleError):
    """Raised when a dynamical matrix has a negative eigenvalue."""

    def __init__(self, message: str, eigenvalue: float):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class StructuralError(NVCycleError):
    """Raised when a lattice is not connected."""


class CommandError(NVCycleError):
    """Raised when a command receives an invalid configuration."""

    def __init__(self, message):
        super().__init__(message)
        self.message = message
