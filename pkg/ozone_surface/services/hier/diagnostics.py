import logging
from typing import Optional, Sequence

import arviz as az
import numpy as np
import pandas as pd

from ...models.posterior import PosteriorSample
from ...models.stage1 import Stage1Fit
from ..surfaces import city_average_effect

logger = logging.getLogger(__name__)

# arviz needs a handful of draws for a bulk ESS
_MIN_DRAWS_FOR_ESS = 4


def _ess(values: np.ndarray) -> float:
    if values.shape[0] < _MIN_DRAWS_FOR_ESS or np.ptp(values) == 0:
        return float("nan")
    return float(az.ess(values[None, :], method="bulk"))


def chain_diagnostics(sample: PosteriorSample, fits: Optional[Sequence[Stage1Fit]] = None) -> pd.DataFrame:
    """
    Trace summary per monitored quantity (mu0, tau, log rho and each city's
    average log RR), followed by the chain's counters.
    """
    series: dict[str, np.ndarray] = {
        "mu0": sample.mu0,
        "tau": sample.tau,
        "log_rho": np.log(sample.rho),
    }
    for fit in fits or []:
        _, draws = city_average_effect(sample, fit)
        series[f"avg_log_rr_{fit.city_id}"] = draws

    rows = []
    for name, values in series.items():
        values = np.asarray(values, dtype=np.float64)
        empty = values.size == 0
        rows.append(
            {
                "parameter": name,
                "mean": np.nan if empty else float(values.mean()),
                "sd": np.nan if empty else float(values.std()),
                "q2.5": np.nan if empty else float(np.quantile(values, 0.025)),
                "q97.5": np.nan if empty else float(np.quantile(values, 0.975)),
                "ess_bulk": _ess(values),
            }
        )
    chain = sample.meta.chain
    for name, value in (
        ("rho_acceptance", chain.rho_acceptance),
        ("rejected_updates", chain.rejected_updates),
        ("iw_redraws", chain.iw_redraws),
        ("n_draws", sample.n_draws),
    ):
        rows.append({"parameter": name, "mean": float(value)})
    return pd.DataFrame(rows, columns=["parameter", "mean", "sd", "q2.5", "q97.5", "ess_bulk"])
