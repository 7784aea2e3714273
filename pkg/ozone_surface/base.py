import click

from .cli import build_group
from .core import settings, setup_logging


def create_cli() -> click.Group:
    """
    configure logging and create the command-line group.
    """
    setup_logging()
    return build_group(name=settings.PROJECT_NAME.lower().replace(" ", "-"))
