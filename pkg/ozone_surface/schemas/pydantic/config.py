import datetime as dt
from typing import Literal, Optional, get_args

from pydantic import BaseModel, Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


ModelVariant = Literal[
    "spatial-monotone",
    "nonspatial-monotone",
    "spatial-unconstrained",
    "nonspatial-unconstrained",
    "additive-nonlinear",
    "additive-linear",
]

MODEL_VARIANTS: tuple[str, ...] = get_args(ModelVariant)

Weekday = Literal["Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"]
SynthFamily = Literal["interaction", "monotone", "additive-linear", "additive-nonlinear"]


class ConfounderConfig(BaseModel):
    running_mean_window: int = Field(3, ge=1, description="Trailing window (days) of the running means")
    temp_running_mean_df: int = Field(6, ge=1, description="df of the running-mean temperature spline")
    dewpoint_df: int = Field(3, ge=1, description="df of the dewpoint spline")
    dewpoint_running_mean_df: int = Field(3, ge=1, description="df of the running-mean dewpoint spline")
    time_df_per_year: float = Field(7.0, gt=0, description="df per year of the calendar-time splines")
    min_time_df: int = Field(7, ge=1, description="Lower bound on the calendar-time spline df")
    reference_day: Weekday = Field("Sunday", description="Day-of-week reference level")
    ozone_season: bool = Field(True, description="Restrict to April through October")
    same_day_temp_df: Optional[int] = Field(
        None, ge=1, description="df of a same-day temperature spline (additive models only)"
    )


class Hyperpriors(BaseModel):
    tau0: float = Field(100.0, gt=0, description="sd of the N(0, tau0^2) prior on mu0")
    a_tau: float = Field(0.001, gt=0, description="Gamma shape of tau")
    b_tau: float = Field(0.001, gt=0, description="Gamma rate of tau")
    mu_rho: float = Field(7.0, description="Mean of the normal prior on log(rho)")
    sigma_rho: float = Field(10.0, gt=0, description="sd of the normal prior on log(rho)")
    iw_df_offset: int = Field(2, ge=1, description="Inverse-Wishart df is M + iw_df_offset")

    def iw_df(self, order: int) -> int:
        return order + self.iw_df_offset


class ChainConfig(BaseModel):
    iterations: int = Field(20000, ge=1)
    burn_in: int = Field(10000, ge=0)
    thin: int = Field(10, ge=1)
    seed: int = 20140601
    truncate: bool = Field(True, description="Apply the max(0, .) link to the j >= 1 coordinates")
    spatial: bool = Field(True, description="Exponential spatial correlation across cities")
    use_likelihood: bool = Field(True, description="False samples the prior only")
    rho_step_sd: float = Field(0.5, gt=0, description="Initial random-walk sd on log(rho)")
    target_acceptance: float = Field(0.3, gt=0, lt=1)
    adapt_interval: int = Field(50, ge=1, description="Iterations between step-size updates during burn-in")
    repair_covariance: bool = Field(False, description="Nearest-PD repair of non-PD V11 blocks")
    progress: bool = True

    @model_validator(mode="after")
    def _check_lengths(self) -> "ChainConfig":
        if self.burn_in >= self.iterations:
            raise ValueError("burn_in must be smaller than iterations")
        if self.thin >= self.iterations:
            raise ValueError("thin must be smaller than iterations")
        if (self.iterations - self.burn_in) < self.thin:
            raise ValueError("iterations - burn_in must be at least thin")
        return self

    @property
    def n_draws(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


class CvConfig(BaseModel):
    fraction: float = Field(0.8, gt=0, lt=1, description="Training share of each city's days")
    contiguous: bool = Field(False, description="Hold out one contiguous block instead of random days")
    seed: int = 20140601
    additive_order: int = Field(4, ge=1, description="Ozone order M1 of the additive nonlinear model")
    tail_quantile: float = Field(0.95, gt=0, lt=1)


class RunConfig(BaseSettings):
    """
    Every analysis setting as one flat key. Layering: defaults < config file
    (dotenv-style ``key=value``) < ``OZS_*`` environment < command-line flags.
    """

    m1: int = Field(7, ge=0, description="Second-stage ozone order M1")
    m2: int = Field(9, ge=0, description="Second-stage temperature order M2")
    min_order_ozone: int = Field(6, ge=0, description="Floor of the first-stage ozone order")
    min_order_temp: int = Field(4, ge=0, description="Floor of the first-stage temperature order")

    tau0: float = Field(100.0, gt=0, description="sd of the prior on mu0")
    a_tau: float = Field(0.001, gt=0, description="Gamma shape of tau")
    b_tau: float = Field(0.001, gt=0, description="Gamma rate of tau")
    mu_rho: float = Field(7.0, description="Prior mean of log(rho), rho in km")
    sigma_rho: float = Field(10.0, gt=0, description="Prior sd of log(rho)")

    iterations: int = Field(20000, ge=1, description="MCMC iterations")
    burn_in: int = Field(10000, ge=0, description="Discarded leading iterations")
    thin: int = Field(10, ge=1, description="Keep every thin-th draw after burn-in")
    rho_step_sd: float = Field(0.5, gt=0, description="Initial random-walk sd on log(rho)")
    target_acceptance: float = Field(0.3, gt=0, lt=1, description="Burn-in target acceptance for rho")
    repair_covariance: bool = Field(False, description="Nearest-PD repair of V11 blocks")

    seed: int = Field(20140601, description="Top-level seed; all streams derive from it")
    threads: int = Field(1, ge=1, description="Worker threads for per-city work")
    allow_skip: bool = Field(False, description="Exclude failing cities instead of aborting")

    glm_tol: float = Field(1e-8, gt=0, description="IRLS relative deviance tolerance")
    glm_max_iter: int = Field(50, ge=1, description="IRLS iteration cap")

    running_mean_window: int = Field(3, ge=1, description="Running-mean window (days)")
    temp_running_mean_df: int = Field(6, ge=1, description="df, running-mean temperature spline")
    dewpoint_df: int = Field(3, ge=1, description="df, dewpoint spline")
    dewpoint_running_mean_df: int = Field(3, ge=1, description="df, running-mean dewpoint spline")
    time_df_per_year: float = Field(7.0, gt=0, description="df per year, calendar-time splines")
    min_time_df: int = Field(7, ge=1, description="Minimum df, calendar-time splines")
    reference_day: Weekday = Field("Sunday", description="Day-of-week reference level")
    ozone_season: bool = Field(True, description="Analyse April-October only")

    grid_size: int = Field(101, ge=2, description="Grid points per axis for surface grids")
    min_supporting_cities: int = Field(5, ge=1, description="Support needed for national cross-sections")

    cv_fraction: float = Field(0.8, gt=0, lt=1, description="Training share for cross-validation")
    cv_contiguous: bool = Field(False, description="Contiguous holdout block")
    model_variant: ModelVariant = Field("spatial-monotone", description="Model fitted by stage2/cv")
    additive_order: int = Field(4, ge=1, description="Ozone order of the additive nonlinear model")

    n_cities: int = Field(10, ge=1, description="Synthetic cities")
    n_days: int = Field(3000, ge=30, description="Synthetic days per city")
    synth_family: SynthFamily = Field("interaction", description="Synthetic truth family")
    effect_scale: float = Field(1.0, ge=0, description="Multiplier on the synthetic ozone effect")
    start_date: dt.date = Field(dt.date(1987, 1, 1), description="First synthetic date")

    model_config = SettingsConfigDict(
        env_prefix="OZS_",
        env_file=None,
        env_file_encoding="utf-8",
        extra="ignore",
        case_sensitive=False,
    )

    @model_validator(mode="after")
    def _check_chain(self) -> "RunConfig":
        self.chain_config()
        return self

    def hyperpriors(self) -> Hyperpriors:
        return Hyperpriors(
            tau0=self.tau0, a_tau=self.a_tau, b_tau=self.b_tau,
            mu_rho=self.mu_rho, sigma_rho=self.sigma_rho,
        )

    def chain_config(self, **overrides) -> ChainConfig:
        values = dict(
            iterations=self.iterations,
            burn_in=self.burn_in,
            thin=self.thin,
            seed=self.seed,
            rho_step_sd=self.rho_step_sd,
            target_acceptance=self.target_acceptance,
            repair_covariance=self.repair_covariance,
        )
        values.update(overrides)
        return ChainConfig(**values)

    def confounder_config(self, **overrides) -> ConfounderConfig:
        values = dict(
            running_mean_window=self.running_mean_window,
            temp_running_mean_df=self.temp_running_mean_df,
            dewpoint_df=self.dewpoint_df,
            dewpoint_running_mean_df=self.dewpoint_running_mean_df,
            time_df_per_year=self.time_df_per_year,
            min_time_df=self.min_time_df,
            reference_day=self.reference_day,
            ozone_season=self.ozone_season,
        )
        values.update(overrides)
        return ConfounderConfig(**values)

    def cv_config(self) -> CvConfig:
        return CvConfig(
            fraction=self.cv_fraction,
            contiguous=self.cv_contiguous,
            seed=self.seed,
            additive_order=self.additive_order,
        )
