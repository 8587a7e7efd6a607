"""Exceptions raised by disbeanet, each carrying the CLI exit code it maps to."""
from os import PathLike
from typing import Optional, Union


class DisBeaNetError(Exception):
    """Base class for all errors raised by the pipeline."""
    exit_code = 1


class InputError(DisBeaNetError):
    """Bad input data, configuration or files (exit code 2)."""
    exit_code = 2


class DataFormatError(InputError):
    """A file could not be parsed."""
    def __init__(self, msg: str, path: Optional[Union[str, PathLike]] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(f"{where}{msg}")


class DataValidationError(InputError):
    """Parsed data violates a domain invariant."""
    pass


class NormalizationError(InputError):
    """Normalization statistics cannot be fitted."""
    def __init__(self, msg: str, feature_index: Optional[int] = None):
        self.feature_index = feature_index
        super().__init__(msg)


class ModelLoadError(InputError):
    """A model file is missing, truncated or inconsistent."""
    pass


class ConfigError(InputError):
    """A configuration or scenario file is invalid."""
    pass


class NumericError(DisBeaNetError):
    """A numerical failure (exit code 3)."""
    exit_code = 3


class GeodesyDomainError(NumericError, ValueError):
    """Input lies outside the domain of a geodesic computation."""
    pass


class TrainingDivergedError(NumericError):
    """Training produced a non-finite loss."""
    def __init__(self, epoch: int, loss: float, depth: Optional[int] = None):
        self.epoch = epoch
        self.loss = loss
        self.depth = depth
        where = f" (hidden depth {depth})" if depth is not None else ""
        super().__init__(f"Training diverged at epoch {epoch}{where}: loss={loss}")
