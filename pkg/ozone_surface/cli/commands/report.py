"""
Post-fit tables and grids: per-city and national log RR and interaction
surfaces, national cross-sections, the stratified temperature comparison and
excess mortality at the 95th percentiles.
"""

import logging
from pathlib import Path

import click
import pandas as pd
from tqdm import tqdm

from ...core.config import settings
from ...core.exceptions import SchemaError
from ...models.posterior import PosteriorSample
from ...services.stage1 import load_stage1
from ...services.surfaces import (
    NationalAccumulator,
    city_average_effect,
    excess_mortality,
    excess_mortality_table,
    interaction_surface,
    log_rr_cross_section,
    log_rr_surface,
    national_grid,
    stratified_ratio,
    stratified_table,
    temperature_percentile_sections,
)
from ..options import load_run_config, run_config_options, split_config_flags
from ..output import echo_table, prepare_dir, write_csv

logger = logging.getLogger(__name__)

SURFACES_DIR = "surfaces"


@click.command("report")
@click.option(
    "--stage1",
    "stage1_dir",
    required=True,
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    help="Stage-1 output directory",
)
@click.option(
    "--posterior",
    "posterior_dir",
    required=True,
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    help="Stage-2 output directory",
)
@click.option(
    "--output",
    "output_dir",
    required=True,
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory for the report tables and grids",
)
@run_config_options
def report(**kwargs):
    """Summarize the posterior: surfaces, cross-sections, stratified ratios, excess mortality."""
    flags, own = split_config_flags(kwargs)
    config = load_run_config(**flags)

    sample = PosteriorSample.load(own["posterior_dir"])
    fits_by_id = {fit.city_id: fit for fit in load_stage1(own["stage1_dir"])[0]}
    missing = [city_id for city_id in sample.city_ids if city_id not in fits_by_id]
    if missing:
        raise SchemaError(str(own["stage1_dir"]), message=f"no stage-1 fit for cities {', '.join(missing)}")
    fits = [fits_by_id[city_id] for city_id in sample.city_ids]

    output_dir = prepare_dir(own["output_dir"])
    surfaces_dir = prepare_dir(output_dir / SURFACES_DIR)
    size = config.grid_size
    min_support = config.min_supporting_cities

    ozone_grid, temp_grid = national_grid(sample, size)
    national_log_rr = NationalAccumulator(min_support)
    national_interaction = NationalAccumulator(min_support)
    city_rows = []
    stratified = []
    excess_joint = []
    excess_ozone = []
    for fit in tqdm(fits, desc="report", disable=not settings.PROGRESS, leave=False):
        write_csv(
            log_rr_surface(sample, fit, grid_size=size).summary_frame(),
            surfaces_dir / f"log_rr_{fit.city_id}.csv",
        )
        write_csv(
            interaction_surface(sample, fit, grid_size=size).summary_frame(),
            surfaces_dir / f"interaction_{fit.city_id}.csv",
        )
        national_log_rr.add(log_rr_surface(sample, fit, ozone_grid, temp_grid))
        national_interaction.add(interaction_surface(sample, fit, ozone_grid, temp_grid))

        average, _ = city_average_effect(sample, fit)
        city_rows.append(
            {"city_id": fit.city_id, "region": fit.region, "n_days": fit.n_days,
             **{f"avg_log_rr_{k}": v for k, v in average.model_dump().items()}}
        )
        stratified.append(stratified_ratio(sample, fit))
        excess_joint.append(excess_mortality(sample, fit, vary_temp=True))
        excess_ozone.append(excess_mortality(sample, fit, vary_temp=False))

    write_csv(national_log_rr.result().summary_frame(), surfaces_dir / "log_rr_national.csv")
    write_csv(national_interaction.result().summary_frame(), surfaces_dir / "interaction_national.csv")
    write_csv(pd.DataFrame(city_rows), output_dir / "city_summary.csv")
    write_csv(
        log_rr_cross_section(sample, fits, temp_grid=temp_grid, min_support=min_support),
        output_dir / "cross_section_ozone_levels.csv",
    )
    write_csv(
        temperature_percentile_sections(sample, fits, ozone_grid=ozone_grid, min_support=min_support),
        output_dir / "cross_section_temp_percentiles.csv",
    )
    write_csv(pd.DataFrame([s.as_row() for s in stratified]), output_dir / "stratified_cities.csv")
    table = stratified_table(stratified)
    write_csv(table, output_dir / "stratified_regions.csv")
    excess = pd.concat(
        [
            excess_mortality_table(excess_joint).assign(scenario="ozone_and_temp"),
            excess_mortality_table(excess_ozone).assign(scenario="ozone_only"),
        ],
        ignore_index=True,
    )
    write_csv(excess, output_dir / "excess_mortality.csv")
    logger.info(f"Report for {len(fits)} cities written to {output_dir}")
    echo_table(table)
