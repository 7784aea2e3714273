import click

from ..core.exceptions import handle_cli_error
from .commands import commands


class OzoneSurfaceGroup(click.Group):
    """Routes every exception a subcommand raises through one error handler."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except (click.exceptions.Exit, click.ClickException, click.Abort):
            raise
        except Exception as exc:
            ctx.exit(handle_cli_error(exc))


def build_group(name: str) -> click.Group:
    group = OzoneSurfaceGroup(
        name=name,
        help="Two-stage estimation of monotone ozone-temperature mortality surfaces.",
    )
    for command in commands:
        group.add_command(command)
    return group


__all__ = ["OzoneSurfaceGroup", "build_group", "commands"]
