import os
import logging
from typing import Literal, Optional

import coloredlogs
from pydantic_settings import BaseSettings, SettingsConfigDict


_PACKAGE_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir, os.pardir))


class Settings(BaseSettings):
    # Process-level settings only; analysis parameters live in RunConfig.
    ENV: Literal["development", "test", "production"] = "development"
    PROJECT_NAME: str = "Ozone Surface"
    LOG_LEVEL: Optional[str] = None
    PROGRESS: bool = True

    model_config = SettingsConfigDict(
        env_file=(
            os.path.join(_PACKAGE_ROOT, ".env"),
            os.path.join(_PACKAGE_ROOT, f".env.{os.getenv('ENV', 'development')}"),
        ),
        env_file_encoding="utf-8",
        extra="ignore",
    )


settings = Settings()


_LEVEL_BY_ENV: dict[str, int] = {
    "production": logging.INFO,
    "test": logging.DEBUG,
    "development": logging.DEBUG,
}

_LOG_FORMAT = "[%(asctime)s - %(name)s - %(levelname)s] %(message)s"
_DATE_FORMAT = "%Y-%m-%dT%H:%M:%S%z"


def setup_logging() -> None:
    """
    Configure the root logger exactly once,

    * Console only (coloredlogs handler -> stderr)
    * ISO - 8601 timestamps
    * Env - based log level: production -> INFO, else DEBUG; LOG_LEVEL wins when set
    * Prevents duplicate handler creation if called twice
    """
    root = logging.getLogger()
    if root.handlers:
        return

    if settings.LOG_LEVEL:
        level = logging.getLevelName(settings.LOG_LEVEL.upper())
        if not isinstance(level, int):
            level = logging.INFO
    else:
        level = _LEVEL_BY_ENV.get(settings.ENV.lower(), logging.INFO)

    coloredlogs.install(
        level=level,
        logger=root,
        fmt=_LOG_FORMAT,
        datefmt=_DATE_FORMAT,
        isatty=None,
    )

    for noisy in ("matplotlib", "numba", "arviz", "h5py"):
        logging.getLogger(noisy).setLevel(logging.WARNING)
