from pathlib import Path

import click
import pandas as pd

CSV_FLOAT_FORMAT = "%.10g"


def prepare_dir(path: Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    """Deterministic CSV writer shared by every command."""
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


def echo_table(frame: pd.DataFrame) -> None:
    click.echo(frame.to_string(index=False, float_format=lambda v: f"{v:.4g}"))
