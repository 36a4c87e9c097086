"""
Exception hierarchy shared by every pipeline stage.
"""

from enum import Enum
from typing import Any, Dict, Optional


class ErrorType(Enum):
    """에러 타입 정의"""

    INPUT_FILE_ERROR = "input_file_error"
    VALIDATION_ERROR = "validation_error"
    CONFIGURATION_ERROR = "configuration_error"
    CONVERGENCE_ERROR = "convergence_error"
    MODEL_SPECIFICATION_ERROR = "model_specification_error"
    STORAGE_ERROR = "storage_error"
    UNKNOWN_ERROR = "unknown_error"


class LadderError(Exception):
    """Base class for errors raised by the toolkit."""

    error_type: ErrorType = ErrorType.UNKNOWN_ERROR

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = context

    def __str__(self) -> str:
        return self.message


class InputFileError(LadderError):
    """Missing input file or missing required column."""

    error_type = ErrorType.INPUT_FILE_ERROR

    def __init__(self, message: str, path: Optional[str] = None, **context: Any):
        super().__init__(message, path=path, **context)
        self.path = path


class DataValidationError(LadderError):
    """Fatal data problem, e.g. a duplicated user id."""

    error_type = ErrorType.VALIDATION_ERROR


class ConfigurationError(LadderError):
    """Parameter outside its admissible range."""

    error_type = ErrorType.CONFIGURATION_ERROR


class ConvergenceError(LadderError):
    """Iterative solver stopped before reaching its tolerance."""

    error_type = ErrorType.CONVERGENCE_ERROR

    def __init__(
        self, message: str, residual: float, iterations: int, **context: Any
    ):
        super().__init__(message, residual=residual, iterations=iterations, **context)
        self.residual = residual
        self.iterations = iterations


class ModelSpecificationError(LadderError):
    """Unknown column, constant covariate, rank deficiency or singular Hessian."""

    error_type = ErrorType.MODEL_SPECIFICATION_ERROR


class StorageError(LadderError):
    """Output could not be written."""

    error_type = ErrorType.STORAGE_ERROR
