import logging
from pathlib import Path

import click
import pandas as pd

from ...models.city import COUNT_COLUMNS
from ...services.data import write_cities
from ...services.synthetic import generate_synthetic, synth_spec_from_config
from ..options import load_run_config, run_config_options, split_config_flags
from ..output import echo_table, prepare_dir

logger = logging.getLogger(__name__)


@click.command("simulate")
@click.option(
    "--output",
    "output_dir",
    required=True,
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory for the city CSVs, metadata and truth.json",
)
@run_config_options
def simulate(**kwargs):
    """Generate synthetic cities with known surfaces."""
    flags, own = split_config_flags(kwargs)
    config = load_run_config(**flags)
    output_dir = prepare_dir(own["output_dir"])

    cities, truth = generate_synthetic(synth_spec_from_config(config))
    write_cities(output_dir, cities)
    truth.save(output_dir)
    logger.info(f"Wrote {len(cities)} synthetic cities to {output_dir}")

    summary = pd.DataFrame(
        [
            {
                "city_id": city.city_id,
                "region": city.region,
                "days": city.n_days,
                "mean_deaths": float(city.frame[list(COUNT_COLUMNS)].sum(axis=1).mean()),
                "mean_ozone": float(city.frame["ozone"].mean()),
                "mean_temp": float(city.frame["temp"].mean()),
            }
            for city in cities
        ]
    )
    echo_table(summary)
