"""
Command-line options generated from RunConfig, and the configuration layering
defaults < config file < OZS_* environment < flags.
"""

import datetime as dt
import logging
import typing
from pathlib import Path
from typing import Any, Callable, Optional

import click
from dotenv import dotenv_values
from pydantic import ValidationError

from ..core.exceptions import ConfigurationError
from ..schemas.pydantic.config import RunConfig

logger = logging.getLogger(__name__)

ENV_PREFIX = "OZS_"


def _option_type(annotation: Any):
    if typing.get_origin(annotation) is typing.Literal:
        return click.Choice([str(v) for v in typing.get_args(annotation)])
    if annotation is bool:
        return None
    if annotation is int:
        return click.INT
    if annotation is float:
        return click.FLOAT
    if annotation is dt.date:
        return click.DateTime(formats=["%Y-%m-%d"])
    return click.STRING


def run_config_options(func: Callable) -> Callable:
    """Add one flag per RunConfig key plus ``--config``; unset flags leave lower layers alone."""
    for name, field in reversed(list(RunConfig.model_fields.items())):
        flag = name.replace("_", "-")
        default = field.default.isoformat() if isinstance(field.default, dt.date) else field.default
        help_text = f"{field.description or name} [default: {default}]"
        option_type = _option_type(field.annotation)
        if option_type is None:
            func = click.option(f"--{flag}/--no-{flag}", name, default=None, help=help_text)(func)
        else:
            func = click.option(f"--{flag}", name, type=option_type, default=None, help=help_text)(func)
    func = click.option(
        "--config",
        "config_file",
        type=click.Path(exists=True, dir_okay=False, path_type=Path),
        default=None,
        help="Flat key=value configuration file (keys as the flags, without dashes)",
    )(func)
    return func


def _file_values(path: Path) -> dict[str, Any]:
    values = {}
    for key, value in dotenv_values(path).items():
        name = key.strip().lower()
        if name.startswith(ENV_PREFIX.lower()):
            name = name[len(ENV_PREFIX):]
        name = name.replace("-", "_")
        if name not in RunConfig.model_fields:
            raise ConfigurationError(key=key, message=f"{path}: unknown configuration key '{key}'.")
        values[name] = value
    return values


def load_run_config(config_file: Optional[Path] = None, **flags: Any) -> RunConfig:
    """Merge the configuration layers; invalid values raise ConfigurationError."""
    overrides = {}
    for name, value in flags.items():
        if value is None or name not in RunConfig.model_fields:
            continue
        overrides[name] = value.date() if isinstance(value, dt.datetime) else value
    try:
        environment = RunConfig()
        merged: dict[str, Any] = _file_values(config_file) if config_file else {}
        merged.update({name: getattr(environment, name) for name in environment.model_fields_set})
        merged.update(overrides)
        config = RunConfig(**merged)
    except ValidationError as exc:
        first = exc.errors()[0]
        key = ".".join(str(part) for part in first.get("loc", ())) or None
        raise ConfigurationError(key=key, message=f"Invalid configuration: {first.get('msg')} ({key or 'run config'}).")
    logger.debug(f"Run configuration: {config.model_dump()}")
    return config


def split_config_flags(kwargs: dict[str, Any]) -> tuple[dict[str, Any], dict[str, Any]]:
    """Separate RunConfig flags from a command's own arguments."""
    flags = {k: v for k, v in kwargs.items() if k in RunConfig.model_fields or k == "config_file"}
    own = {k: v for k, v in kwargs.items() if k not in flags}
    return flags, own
