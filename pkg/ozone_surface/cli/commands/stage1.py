import logging
from pathlib import Path

import click
import pandas as pd

from ...services.data import load_cities
from ...services.stage1 import Stage1Service, save_stage1
from ..options import load_run_config, run_config_options, split_config_flags
from ..output import echo_table, prepare_dir, write_csv

logger = logging.getLogger(__name__)

INGESTION_FILE = "ingestion.csv"
SUMMARY_FILE = "stage1_summary.csv"


@click.command("stage1")
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
    help="Directory for the per-city fits and global.json",
)
@run_config_options
def stage1(**kwargs):
    """Fit the per-city quasi-Poisson regressions on local Bernstein bases."""
    flags, own = split_config_flags(kwargs)
    config = load_run_config(**flags)
    output_dir = prepare_dir(own["output_dir"])

    cities, reports = load_cities(own["input_dir"])
    fits, record = Stage1Service(config).run(cities)
    save_stage1(output_dir, fits, record)

    ingestion = pd.DataFrame(
        [
            {"city_id": r.city_id, "rows_read": r.rows_read, "rows_dropped": r.rows_dropped,
             **{f"missing_{k}": v for k, v in sorted(r.missing.items())}}
            for r in reports
        ]
    )
    write_csv(ingestion.fillna(0), output_dir / INGESTION_FILE)

    summary = pd.DataFrame(
        [
            {
                "city_id": fit.city_id,
                "region": fit.region,
                "n_days": fit.n_days,
                "ozone_order": fit.local_orders[0],
                "temp_order": fit.local_orders[1],
                "dispersion": fit.dispersion,
                "deviance": fit.deviance,
                "iterations": fit.iterations,
            }
            for fit in fits
        ]
        + [{"city_id": city_id, "skipped": reason} for city_id, reason in sorted(record.skipped.items())]
    )
    write_csv(summary, output_dir / SUMMARY_FILE)
    logger.info(f"Stage 1 output written to {output_dir}")
    echo_table(summary)
