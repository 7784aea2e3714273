import logging
from pathlib import Path

import click

from ...schemas.pydantic.config import MODEL_VARIANTS
from ...services.cv import CvService
from ...services.data import load_cities
from ..options import load_run_config, run_config_options, split_config_flags
from ..output import echo_table, prepare_dir

logger = logging.getLogger(__name__)

REPORT_FILE = "cv_report.csv"


@click.command("cv")
@click.option(
    "--input",
    "input_dir",
    required=True,
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    help="Directory holding metadata.csv and one CSV per city",
)
@click.option(
    "--output",
    "output_dir",
    required=True,
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory for cv_report.csv",
)
@click.option(
    "--all-variants",
    is_flag=True,
    default=False,
    help=f"Compare every model ({', '.join(MODEL_VARIANTS)}) on the same split instead of --model-variant only",
)
@run_config_options
def cv(**kwargs):
    """Holdout deviance of one or all models on a seeded train/test split."""
    flags, own = split_config_flags(kwargs)
    config = load_run_config(**flags)
    variants = list(MODEL_VARIANTS) if own["all_variants"] else [config.model_variant]

    cities, _ = load_cities(own["input_dir"])
    cv_report = CvService(config).run(cities, variants)

    output_dir = prepare_dir(own["output_dir"])
    cv_report.save_csv(output_dir / REPORT_FILE)
    logger.info(f"Cross-validation report written to {output_dir / REPORT_FILE}")
    echo_table(cv_report.to_frame())
