import logging
from typing import Optional, Sequence

import click

logger = logging.getLogger(__name__)


class OzoneSurfaceError(Exception):
    """
    Base class for every error the estimator raises on purpose.
    """

    exit_code = 1


class ConfigurationError(OzoneSurfaceError):
    """
    Raised when a configuration value (file, environment or flag) is invalid.
    """

    exit_code = 2

    def __init__(self, key: Optional[str] = None, message: Optional[str] = None):
        if key and not message:
            message = f"Invalid configuration value for '{key}'."
        elif not message:
            message = "Invalid configuration."
        super().__init__(message)
        self.key = key


class SchemaError(OzoneSurfaceError):
    """
    Raised when an input CSV violates the documented column dictionary.
    """

    def __init__(
        self,
        path: Optional[str] = None,
        line: Optional[int] = None,
        message: Optional[str] = None,
    ):
        location = path or "<input>"
        if line is not None:
            location = f"{location}:{line}"
        super().__init__(f"{location}: {message or 'schema violation'}")
        self.path = path
        self.line = line


class DomainError(OzoneSurfaceError, ValueError):
    """
    Raised when a value falls outside the range a basis was built for.
    """

    def __init__(
        self,
        variable: Optional[str] = None,
        lo: Optional[float] = None,
        hi: Optional[float] = None,
        message: Optional[str] = None,
    ):
        if not message:
            name = variable or "value"
            if lo is not None and hi is not None:
                message = f"{name} outside the basis domain [{lo:.6g}, {hi:.6g}]."
            else:
                message = f"{name} outside the basis domain."
        super().__init__(message)
        self.variable = variable
        self.lo = lo
        self.hi = hi


class InsufficientDataError(OzoneSurfaceError):
    """
    Raised when a city has too few usable days for the requested model.
    """

    def __init__(self, city_id: Optional[str] = None, message: Optional[str] = None):
        if city_id and not message:
            message = f"City {city_id} does not have enough complete days for the model."
        elif not message:
            message = "Not enough complete days for the model."
        super().__init__(message)
        self.city_id = city_id


class RankDeficiencyError(OzoneSurfaceError):
    """
    Raised when a design matrix is rank deficient; lists the aliased columns.
    """

    def __init__(
        self,
        columns: Optional[Sequence[str]] = None,
        city_id: Optional[str] = None,
        message: Optional[str] = None,
    ):
        columns = list(columns or [])
        if not message:
            prefix = f"[city {city_id}] " if city_id else ""
            if columns:
                message = f"{prefix}Design is rank deficient; aliased columns: {', '.join(columns)}."
            else:
                message = f"{prefix}Design is rank deficient."
        super().__init__(message)
        self.columns = columns
        self.city_id = city_id


class FittingError(OzoneSurfaceError):
    """
    Raised when a first-stage or second-stage fit cannot be completed for a city.
    """

    def __init__(self, city_id: Optional[str] = None, message: Optional[str] = None):
        if city_id and not message:
            message = f"Fitting failed for city {city_id}."
        elif city_id:
            message = f"[city {city_id}] {message}"
        elif not message:
            message = "Fitting failed."
        super().__init__(message)
        self.city_id = city_id


class GlmConvergenceError(FittingError):
    """
    Raised when IRLS does not converge; ``last_fit`` holds the final iterate.
    """

    def __init__(self, last_fit=None, city_id: Optional[str] = None, message: Optional[str] = None):
        if not message:
            iterations = getattr(last_fit, "iterations", "?")
            message = f"IRLS did not converge after {iterations} iterations."
        super().__init__(city_id=city_id, message=message)
        self.last_fit = last_fit


class NotPositiveDefiniteError(OzoneSurfaceError):
    """
    Raised when a covariance matrix that must be positive definite is not.
    """

    def __init__(self, what: Optional[str] = None, city_id: Optional[str] = None, message: Optional[str] = None):
        if not message:
            prefix = f"[city {city_id}] " if city_id else ""
            message = f"{prefix}{what or 'Matrix'} is not positive definite."
        super().__init__(message)
        self.what = what
        self.city_id = city_id


def handle_cli_error(exc: BaseException) -> int:
    """Map an exception raised inside a command to an exit code, reporting it once."""
    if isinstance(exc, OzoneSurfaceError):
        click.echo(f"Error: {exc}", err=True)
        return exc.exit_code
    logger.error(f"Unhandled error: {exc}", exc_info=exc)
    click.echo(f"Error: {exc}", err=True)
    return 1
