import logging
from pathlib import Path

import click

from ...core.exceptions import ConfigurationError
from ...services.cv import variant_settings
from ...services.hier import chain_diagnostics, run_chain
from ...services.stage1 import load_stage1
from ..options import load_run_config, run_config_options, split_config_flags
from ..output import echo_table, prepare_dir, write_csv

logger = logging.getLogger(__name__)

DIAGNOSTICS_FILE = "chain_diagnostics.csv"


@click.command("stage2")
@click.option(
    "--input",
    "input_dir",
    required=True,
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    help="Stage-1 output directory",
)
@click.option(
    "--output",
    "output_dir",
    required=True,
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory for the posterior draws and chain diagnostics",
)
@run_config_options
def stage2(**kwargs):
    """Pool the stage-1 fits with the hierarchical spatial model (MCMC)."""
    flags, own = split_config_flags(kwargs)
    config = load_run_config(**flags)
    variant = variant_settings(config.model_variant, config)
    if variant.additive:
        raise ConfigurationError(
            key="model_variant",
            message=f"'{config.model_variant}' is only fitted by the cv command; stage2 fits surface models.",
        )

    fits, record = load_stage1(own["input_dir"])
    bases = (record.ozone_basis, record.temp_basis)
    if (bases[0].order, bases[1].order) != (config.m1, config.m2):
        logger.warning(
            f"Stage-1 output was built with M1={bases[0].order}, M2={bases[1].order}; "
            f"ignoring m1={config.m1}, m2={config.m2}"
        )
    chain = config.chain_config(truncate=variant.truncate, spatial=variant.spatial)
    sample = run_chain(fits, bases, chain, config.hyperpriors())

    output_dir = prepare_dir(own["output_dir"])
    sample.save(output_dir)
    diagnostics = chain_diagnostics(sample, fits)
    write_csv(diagnostics, output_dir / DIAGNOSTICS_FILE)
    logger.info(f"Posterior ({sample.n_draws} draws, {len(fits)} cities) written to {output_dir}")
    echo_table(diagnostics)
