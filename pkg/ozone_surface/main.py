from .base import create_cli

cli = create_cli()


if __name__ == "__main__":
    cli()
