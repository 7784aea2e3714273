"""
Systematic-scan sampler for the second stage: a coordinate-wise Gibbs sweep of
every city's theta*, conjugate updates of (mu, mu0, tau, S1, S2) and a
random-walk Metropolis step on log(rho).

A j >= 1 coordinate enters the likelihood through max(0, theta*), so its full
conditional is a two-piece density: the prior mass below zero, and a Gaussian
tilted by the likelihood above zero. Both pieces are truncated normals.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
from scipy import stats
from scipy.special import log_ndtr, ndtr, ndtri
from tqdm import tqdm

from ...core.config import settings
from ...core.exceptions import ConfigurationError, NotPositiveDefiniteError
from ...core.seeding import derive_rng
from ...models.posterior import ChainMeta, PosteriorMeta, PosteriorSample, stack_draws
from ...models.stage1 import Stage1Fit
from ...schemas.pydantic.config import ChainConfig, Hyperpriors
from ...schemas.pydantic.surface import BernsteinBasis1D
from ..basis import constrained_mask, inverse_transform_matrix, tensor_design, transform_matrix
from ..data import distance_matrix
from .likelihood import CityLikelihood
from .prior import SpatialPrior, as_grid, colocated_pairs, correlation_precision

logger = logging.getLogger(__name__)

# above this standardized bound the inverse-CDF draw loses precision
_INVERSE_CDF_LIMIT = 3.0
_IW_ATTEMPTS = 5
# added to the diagonal of R when two cities share a location
COLOCATED_NUGGET = 1e-4


def sample_truncated_normal(
    rng: np.random.Generator, mean: float, sd: float, lower: float = -math.inf, upper: float = math.inf
) -> float:
    """One draw from N(mean, sd^2) restricted to [lower, upper]."""
    a = (lower - mean) / sd
    b = (upper - mean) / sd
    if math.isinf(b) and a < _INVERSE_CDF_LIMIT:
        z = float(ndtri(rng.uniform(float(ndtr(a)), 1.0)))
    elif math.isinf(a) and b > -_INVERSE_CDF_LIMIT:
        z = float(ndtri(rng.uniform(0.0, float(ndtr(b)))))
    else:
        z = float(stats.truncnorm.rvs(a, b, random_state=rng))
    if not math.isfinite(z):
        z = float(stats.truncnorm.rvs(a, b, random_state=rng))
    return mean + sd * min(max(z, a), b)


@dataclass
class HierState:
    theta_star: np.ndarray
    prior: SpatialPrior
    log_posterior: float = math.nan

    def theta(self, m1: int, m2: int, truncate: bool = True) -> np.ndarray:
        if not truncate:
            return self.theta_star.copy()
        return np.where(constrained_mask(m1, m2), np.maximum(self.theta_star, 0.0), self.theta_star)


@dataclass
class _Counters:
    rho_accepted: int = 0
    rho_proposed: int = 0
    window_accepted: int = 0
    rejected_updates: int = 0
    iw_redraws: int = 0


class HierSampler:
    """
    Second-stage Gibbs/Metropolis sampler over the fitted cities. One instance
    runs one chain; all randomness comes from ``rng``.
    """

    def __init__(
        self,
        fits: Sequence[Stage1Fit],
        bases: tuple[BernsteinBasis1D, BernsteinBasis1D],
        chain: ChainConfig,
        hyper: Hyperpriors,
        rng: Optional[np.random.Generator] = None,
        stream: str = "stage2",
    ):
        if not fits:
            raise ConfigurationError(key="cities", message="The second stage needs at least one fitted city.")
        self.fits = list(fits)
        self.bases = bases
        self.chain = chain
        self.hyper = hyper
        self.stream = stream
        self.rng = rng if rng is not None else derive_rng(chain.seed, stream)
        self.m1, self.m2 = bases[0].order, bases[1].order
        self.p1, self.p2 = self.m1 + 1, self.m2 + 1
        self.n_coef = self.p1 * self.p2
        self.constrained = constrained_mask(self.m1, self.m2) if chain.truncate else np.zeros(self.n_coef, dtype=bool)

        t_inv = inverse_transform_matrix(self.m1, self.m2)
        self.likelihoods = [CityLikelihood.build(fit, bases, t_inv, repair=chain.repair_covariance) for fit in self.fits]
        distances = distance_matrix([(fit.lat, fit.lon) for fit in self.fits])
        nugget = self._colocation_nugget(distances) if chain.spatial else 0.0
        prior = SpatialPrior.initial(self.m1, self.m2, distances, hyper, spatial=chain.spatial, nugget=nugget)
        self.state = HierState(theta_star=self._initial_theta_star(t_inv), prior=prior)
        self.rho_step = chain.rho_step_sd
        self.counters = _Counters()
        self.refresh()

    @property
    def n_cities(self) -> int:
        return len(self.fits)

    def _colocation_nugget(self, distances: np.ndarray) -> float:
        pairs = colocated_pairs(distances)
        if not pairs:
            return 0.0
        names = ", ".join(f"{self.fits[a].city_id}/{self.fits[b].city_id}" for a, b in pairs)
        logger.warning(f"Co-located cities ({names}); adding a nugget of {COLOCATED_NUGGET:g} to the spatial correlation")
        return COLOCATED_NUGGET

    def _initial_theta_star(self, t_inv: np.ndarray) -> np.ndarray:
        """Global-basis least-squares fit to each city's first-stage surface, clipped to the cone."""
        T = transform_matrix(self.m1, self.m2)
        rows = []
        for fit in self.fits:
            target = tensor_design(fit.local_ozone_basis, fit.local_temp_basis, fit.ozone_obs, fit.temp_obs) @ fit.beta_hat
            design = tensor_design(self.bases[0], self.bases[1], fit.ozone_obs, fit.temp_obs)
            psi = np.linalg.lstsq(design, target, rcond=None)[0]
            rows.append(T @ psi)
        theta = np.vstack(rows)
        return np.where(self.constrained, np.maximum(theta, 0.0), theta)

    def refresh(self) -> None:
        """Recompute the cached inverses of S1, S2 and R after ``state.prior`` is edited in place."""
        self._refresh_sigma()
        self._refresh_correlation()

    def _refresh_sigma(self) -> None:
        pr = self.state.prior
        self._s1_inv = np.linalg.inv(pr.s1)
        self._s2_inv = np.linalg.inv(pr.s2)
        self._s1_inv = 0.5 * (self._s1_inv + self._s1_inv.T)
        self._s2_inv = 0.5 * (self._s2_inv + self._s2_inv.T)
        self._sigma_inv = np.kron(self._s2_inv, self._s1_inv)

    def _refresh_correlation(self) -> None:
        precision, log_det = self._precision(self.state.prior.correlation())
        if precision is None:
            raise NotPositiveDefiniteError("spatial correlation matrix")
        self._Q, self._log_det_R = precision, log_det

    @staticmethod
    def _precision(correlation: np.ndarray):
        try:
            return correlation_precision(correlation)
        except np.linalg.LinAlgError:
            return None, math.nan

    def _sigma_inv_apply(self, vectors: np.ndarray) -> np.ndarray:
        """(S2 kron S1)^-1 applied to psi-ordered rows, through the factors."""
        grids = as_grid(vectors, self.p1, self.p2)
        out = self._s1_inv @ grids @ self._s2_inv
        return np.swapaxes(out, -1, -2).reshape(vectors.shape)

    def _link(self, x: np.ndarray) -> np.ndarray:
        return np.where(self.constrained, np.maximum(x, 0.0), x)

    # -- theta* -----------------------------------------------------------

    def _two_piece_draw(self, pm: float, pv: float, q: float, s: float) -> Optional[float]:
        sd = math.sqrt(pv)
        lw_neg = float(log_ndtr(-pm / sd))
        p = 1.0 / pv + q
        m_pos = (pm / pv + s) / p
        lw_pos = 0.5 * (m_pos * m_pos * p - pm * pm / pv) - 0.5 * math.log(p * pv) + float(log_ndtr(m_pos * math.sqrt(p)))
        if not (math.isfinite(lw_neg) and math.isfinite(lw_pos)):
            return None
        top = max(lw_neg, lw_pos)
        w_neg, w_pos = math.exp(lw_neg - top), math.exp(lw_pos - top)
        if self.rng.random() * (w_neg + w_pos) < w_pos:
            return sample_truncated_normal(self.rng, m_pos, 1.0 / math.sqrt(p), lower=0.0)
        return sample_truncated_normal(self.rng, pm, sd, upper=0.0)

    def gibbs_theta_star(self, c: int) -> np.ndarray:
        """Coordinate-wise draw of theta*_c from its full conditional."""
        st = self.state
        pr = st.prior
        Q = self._Q
        deviation = st.theta_star - pr.mu
        q_cc = Q[c, c]
        coupling = Q[c] @ deviation - q_cc * deviation[c]
        m = pr.mu - coupling / q_cc
        Lam = q_cc * self._sigma_inv

        x = st.theta_star[c].copy()
        h = self._link(x)
        u = Lam @ (x - m)
        use_likelihood = self.chain.use_likelihood
        if use_likelihood:
            H = self.likelihoods[c].H
            g = self.likelihoods[c].b - H @ h
        for i in range(self.n_coef):
            l_ii = Lam[i, i]
            x_i = x[i]
            pm = x_i - u[i] / l_ii
            if use_likelihood:
                q = H[i, i]
                s = g[i] + q * h[i]
            else:
                q = s = 0.0
            if self.constrained[i]:
                new = self._two_piece_draw(pm, 1.0 / l_ii, q, s)
                if new is None:
                    self.counters.rejected_updates += 1
                    logger.debug(f"[city {self.fits[c].city_id}] rejected update of coordinate {i}")
                    continue
                new_h = max(new, 0.0)
            else:
                precision = l_ii + q
                new = (pm * l_ii + s) / precision + self.rng.standard_normal() / math.sqrt(precision)
                new_h = new
            if new != x_i:
                u += Lam[i] * (new - x_i)
            if use_likelihood and new_h != h[i]:
                g -= H[i] * (new_h - h[i])
            x[i] = new
            h[i] = new_h
        st.theta_star[c] = x
        return x

    # -- hyperparameters -------------------------------------------------

    def _kron_normal(self) -> np.ndarray:
        """A draw from N(0, S2 kron S1) through the factor Cholesky matrices."""
        pr = self.state.prior
        L1 = np.linalg.cholesky(pr.s1)
        L2 = np.linalg.cholesky(pr.s2)
        z = self.rng.standard_normal((self.p1, self.p2))
        return (L1 @ z @ L2.T).T.reshape(-1)

    def _draw_inverse_wishart(self, df: float, scale: np.ndarray, what: str) -> np.ndarray:
        scale = 0.5 * (scale + scale.T)
        dim = scale.shape[0]
        for attempt in range(_IW_ATTEMPTS):
            draw = np.atleast_2d(stats.invwishart.rvs(df=df, scale=scale, random_state=self.rng))
            draw = 0.5 * (draw + draw.T)
            try:
                np.linalg.cholesky(draw)
                return draw
            except np.linalg.LinAlgError:
                self.counters.iw_redraws += 1
                jitter = 1e-8 * max(float(np.trace(scale)), 1.0) / dim * 10.0**attempt
                logger.debug(f"{what} draw not positive definite, redrawing with jitter {jitter:.2g}")
                scale = scale + jitter * np.eye(dim)
        raise NotPositiveDefiniteError(what)

    def draw_mu(self) -> None:
        st = self.state
        pr = st.prior
        Q = self._Q
        ones = np.ones(self.n_cities)
        shrink = pr.tau + float(ones @ Q @ ones)
        mean = (pr.tau * pr.mu0 + st.theta_star.T @ (Q @ ones)) / shrink
        pr.mu = mean + self._kron_normal() / math.sqrt(shrink)

    def draw_mu0(self) -> None:
        pr = self.state.prior
        one_sigma_one = float(self._s1_inv.sum() * self._s2_inv.sum())
        one_sigma_mu = float(np.ones(self.n_coef) @ self._sigma_inv_apply(pr.mu))
        precision = 1.0 / self.hyper.tau0**2 + pr.tau * one_sigma_one
        pr.mu0 = pr.tau * one_sigma_mu / precision + self.rng.standard_normal() / math.sqrt(precision)

    def draw_tau(self) -> None:
        pr = self.state.prior
        centred = pr.mu - pr.mu0
        quad = float(centred @ self._sigma_inv_apply(centred))
        pr.tau = float(self.rng.gamma(self.hyper.a_tau + 0.5 * self.n_coef, 1.0 / (self.hyper.b_tau + 0.5 * quad)))

    def draw_factors(self) -> None:
        """S1 given S2, then S2 given the new S1."""
        st = self.state
        pr = st.prior
        n = self.n_cities
        F = as_grid(st.theta_star - pr.mu, self.p1, self.p2)
        W = np.einsum("cd,dij->cij", self._Q, F)
        E = as_grid(pr.mu - pr.mu0, self.p1, self.p2)

        scale1 = np.eye(self.p1) + np.einsum("cij,jk,clk->il", F, self._s2_inv, W) + pr.tau * E @ self._s2_inv @ E.T
        pr.s1 = self._draw_inverse_wishart(self.hyper.iw_df(self.m1) + (n + 1) * self.p2, scale1, "S1")
        self._s1_inv = np.linalg.inv(pr.s1)
        self._s1_inv = 0.5 * (self._s1_inv + self._s1_inv.T)

        scale2 = np.eye(self.p2) + np.einsum("cji,jk,ckl->il", F, self._s1_inv, W) + pr.tau * E.T @ self._s1_inv @ E
        pr.s2 = self._draw_inverse_wishart(self.hyper.iw_df(self.m2) + (n + 1) * self.p1, scale2, "S2")
        self._refresh_sigma()

    def gibbs_hyper(self) -> None:
        """Conjugate draws of mu, mu0, tau, then S1 and S2 one at a time."""
        self.draw_mu()
        self.draw_mu0()
        self.draw_tau()
        self.draw_factors()

    # -- rho -------------------------------------------------------------

    def _log_rho_target(self, log_rho: float, K: np.ndarray) -> float:
        pr = self.state.prior
        precision, log_det = self._precision(pr.correlation_at(math.exp(log_rho)))
        if precision is None:
            return -math.inf
        prior = float(stats.norm.logpdf(log_rho, self.hyper.mu_rho, self.hyper.sigma_rho))
        return -0.5 * self.n_coef * log_det - 0.5 * float(np.sum(precision * K)) + prior

    def mh_log_rho(self, step_sd: Optional[float] = None) -> bool:
        """Random-walk Metropolis on log(rho); the likelihood does not involve rho."""
        pr = self.state.prior
        if not pr.spatial:
            return False
        step = self.rho_step if step_sd is None else step_sd
        deviation = self.state.theta_star - pr.mu
        K = deviation @ self._sigma_inv_apply(deviation).T
        current = math.log(pr.rho)
        proposal = current + step * self.rng.standard_normal()
        log_ratio = self._log_rho_target(proposal, K) - self._log_rho_target(current, K)
        u = self.rng.random()
        accepted = log_ratio >= 0 or (math.isfinite(log_ratio) and u < math.exp(log_ratio))
        if accepted:
            pr.rho = math.exp(proposal)
            self._refresh_correlation()
        return accepted

    # -- joint density ---------------------------------------------------

    def log_posterior(self) -> float:
        st = self.state
        pr = st.prior
        hyper = self.hyper
        n, p = self.n_cities, self.n_coef
        log_2pi = math.log(2.0 * math.pi)
        _, log_det_s1 = np.linalg.slogdet(pr.s1)
        _, log_det_s2 = np.linalg.slogdet(pr.s2)
        log_det_sigma = self.p2 * log_det_s1 + self.p1 * log_det_s2

        total = 0.0
        if self.chain.use_likelihood:
            theta = st.theta(self.m1, self.m2, self.chain.truncate)
            total += sum(lik.log_density(theta[c]) for c, lik in enumerate(self.likelihoods))
        deviation = st.theta_star - pr.mu
        K = deviation @ self._sigma_inv_apply(deviation).T
        total += -0.5 * (n * p * log_2pi + p * self._log_det_R + n * log_det_sigma + float(np.sum(self._Q * K)))
        centred = pr.mu - pr.mu0
        total += -0.5 * (
            p * log_2pi - p * math.log(pr.tau) + log_det_sigma + pr.tau * float(centred @ self._sigma_inv_apply(centred))
        )
        total += float(stats.norm.logpdf(pr.mu0, 0.0, hyper.tau0))
        total += float(stats.gamma.logpdf(pr.tau, hyper.a_tau, scale=1.0 / hyper.b_tau))
        total += float(stats.invwishart.logpdf(pr.s1, df=hyper.iw_df(self.m1), scale=np.eye(self.p1)))
        total += float(stats.invwishart.logpdf(pr.s2, df=hyper.iw_df(self.m2), scale=np.eye(self.p2)))
        if pr.spatial:
            total += float(stats.norm.logpdf(math.log(pr.rho), hyper.mu_rho, hyper.sigma_rho))
        return total

    # -- chain -----------------------------------------------------------

    def step(self) -> bool:
        for c in range(self.n_cities):
            self.gibbs_theta_star(c)
        self.gibbs_hyper()
        return self.mh_log_rho()

    def _adapt(self, iteration: int) -> None:
        interval = self.chain.adapt_interval
        if iteration % interval:
            return
        rate = self.counters.window_accepted / interval
        self.rho_step *= math.exp(rate - self.chain.target_acceptance)
        self.counters.window_accepted = 0
        logger.debug(f"iteration {iteration}: rho acceptance {rate:.2f}, step {self.rho_step:.3g}")

    def run(self) -> PosteriorSample:
        chain = self.chain
        pr = self.state.prior
        keep = {name: [] for name in ("theta_star", "theta", "mu", "mu0", "tau", "s1", "s2", "rho", "log_posterior")}
        show = chain.progress and settings.PROGRESS
        logger.info(
            f"Stage 2 chain '{self.stream}': {self.n_cities} cities, {chain.iterations} iterations, "
            f"burn-in {chain.burn_in}, thin {chain.thin}"
        )
        for iteration in tqdm(range(1, chain.iterations + 1), desc="stage 2", disable=not show, leave=False):
            accepted = self.step()
            if pr.spatial:
                if iteration <= chain.burn_in:
                    self.counters.window_accepted += int(accepted)
                    self._adapt(iteration)
                else:
                    self.counters.rho_proposed += 1
                    self.counters.rho_accepted += int(accepted)
            if iteration > chain.burn_in and (iteration - chain.burn_in) % chain.thin == 0:
                self.state.log_posterior = self.log_posterior()
                keep["theta_star"].append(self.state.theta_star.copy())
                keep["theta"].append(self.state.theta(self.m1, self.m2, chain.truncate))
                keep["mu"].append(pr.mu.copy())
                keep["mu0"].append(pr.mu0)
                keep["tau"].append(pr.tau)
                keep["s1"].append(pr.s1.copy())
                keep["s2"].append(pr.s2.copy())
                keep["rho"].append(pr.rho)
                keep["log_posterior"].append(self.state.log_posterior)

        acceptance = self.counters.rho_accepted / self.counters.rho_proposed if self.counters.rho_proposed else 0.0
        logger.info(
            f"Stage 2 chain '{self.stream}' done: {len(keep['tau'])} draws, rho acceptance {acceptance:.2f}, "
            f"{self.counters.rejected_updates} rejected updates, {self.counters.iw_redraws} inverse-Wishart redraws"
        )
        meta = PosteriorMeta(
            city_ids=[fit.city_id for fit in self.fits],
            regions=[fit.region for fit in self.fits],
            ozone_basis=self.bases[0],
            temp_basis=self.bases[1],
            chain=ChainMeta(
                iterations=chain.iterations,
                burn_in=chain.burn_in,
                thin=chain.thin,
                seed=chain.seed,
                stream=self.stream,
                truncate=chain.truncate,
                spatial=chain.spatial,
                use_likelihood=chain.use_likelihood,
                rho_acceptance=acceptance,
                final_rho_step=self.rho_step,
                rejected_updates=self.counters.rejected_updates,
                iw_redraws=self.counters.iw_redraws,
            ),
        )
        n, p = self.n_cities, self.n_coef
        return PosteriorSample(
            meta=meta,
            theta_star=stack_draws(keep["theta_star"], (n, p)),
            theta=stack_draws(keep["theta"], (n, p)),
            mu=stack_draws(keep["mu"], (p,)),
            mu0=np.asarray(keep["mu0"], dtype=np.float64),
            tau=np.asarray(keep["tau"], dtype=np.float64),
            s1=stack_draws(keep["s1"], (self.p1, self.p1)),
            s2=stack_draws(keep["s2"], (self.p2, self.p2)),
            rho=np.asarray(keep["rho"], dtype=np.float64),
            log_posterior=np.asarray(keep["log_posterior"], dtype=np.float64),
        )


def run_chain(
    fits: Sequence[Stage1Fit],
    bases: tuple[BernsteinBasis1D, BernsteinBasis1D],
    chain: ChainConfig,
    hyper: Hyperpriors,
    stream: str = "stage2",
) -> PosteriorSample:
    """Run one seeded chain; the same (fits, bases, chain, hyper, stream) gives the same draws."""
    return HierSampler(fits, bases, chain, hyper, stream=stream).run()
