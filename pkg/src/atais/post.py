"""Full Bayesian post-processing by recycling the stored particles.

Every quantity here is built from cached residuals and proposal densities,
so nothing in this module calls a forward map. Reweighting a particle to an
arbitrary noise scale ``s`` gives

    rho(s) = (2 pi s^2)^(-K/2) exp(-e / (2 s^2)) g(theta) / q_t(theta)

whose average over all particles estimates the conditional evidence Z(s).
"""
from __future__ import annotations

import logging
import threading
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .core import ParticleStore
from .model import LOG_2PI, SigmaPrior

log = logging.getLogger(__name__)

_CHUNK = 2_000_000


class McmcError(RuntimeError):
    pass


class Estimate(NamedTuple):
    value: float
    log_value: float


def _log_base(store: ParticleStore):
    """Per-particle ``log g - log q`` and residuals; unusable particles get -inf."""
    e = store.residual
    a = store.log_prior - store.log_q
    a = np.where(np.isfinite(e) & np.isfinite(a), a, -np.inf)
    return a, np.where(np.isfinite(e), e, 0.0)


def log_rho_weights(store: ParticleStore, sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    a, e = _log_base(store)
    return -0.5 * store.K * (LOG_2PI + 2 * np.log(sigma)) - e / (2 * sigma ** 2) + a


def rho_weights(store: ParticleStore, sigma: float) -> np.ndarray:
    """Unnormalised IS weights of every stored particle against ``l(y|., sigma) g``."""
    return np.exp(log_rho_weights(store, sigma))


def normalized_rho(store: ParticleStore, sigma: float) -> np.ndarray:
    """``rho`` normalised over all particles; the ``sigma^-K`` factor cancels."""
    a, e = _log_base(store)
    lr = a - e / (2 * sigma ** 2)
    if not np.any(np.isfinite(lr)):
        raise ValueError("no particle with a finite weight")
    return np.exp(lr - logsumexp(lr))


class EvidenceCurve:
    """``sigma -> Z_hat(sigma)``, memoised; costs O(NT) per new sigma."""

    def __init__(self, store: ParticleStore):
        if len(store) == 0:
            raise ValueError("empty particle store")
        self.store = store
        self.K = store.K
        self._a, self._e = _log_base(store)
        self._log_n = np.log(len(store))
        self._cache: dict[float, float] = {}
        self._lock = threading.Lock()

    def _compute(self, sigmas: np.ndarray) -> np.ndarray:
        out = np.empty(sigmas.size)
        rows = max(1, _CHUNK // self._a.size)
        for start in range(0, sigmas.size, rows):
            s = sigmas[start:start + rows, None]
            lse = logsumexp(self._a[None, :] - self._e[None, :] / (2 * s ** 2), axis=1)
            out[start:start + rows] = (-0.5 * self.K * (LOG_2PI + 2 * np.log(s[:, 0]))
                                       + lse - self._log_n)
        return out

    def log_value(self, sigma):
        """``log Z_hat(sigma)`` for a scalar or an array of positive scales."""
        s = np.asarray(sigma, dtype=float)
        if np.any(s <= 0):
            raise ValueError("sigma must be positive")
        if s.ndim == 0:
            key = float(s)
            hit = self._cache.get(key)
            if hit is None:
                hit = float(self._compute(s.reshape(1))[0])
                with self._lock:
                    self._cache[key] = hit
            return hit
        return self._compute(s.ravel()).reshape(s.shape)

    def __call__(self, sigma):
        return np.exp(self.log_value(sigma))


def conditional_evidence(store: ParticleStore, sigma: float) -> Estimate:
    """Arithmetic mean of ``rho(sigma)`` over all NT particles."""
    lz = EvidenceCurve(store).log_value(sigma)
    if lz == -np.inf:
        warnings.warn("every particle weight is zero at this sigma", RuntimeWarning, stacklevel=2)
    return Estimate(float(np.exp(lz)), float(lz))


def riemann_nodes(prior: SigmaPrior, R: int) -> np.ndarray:
    """Midpoints of ``R`` equal cells on the prior support."""
    width = (prior.b - prior.a) / R
    return prior.a + width * (np.arange(R) + 0.5)


def global_evidence(curve: EvidenceCurve, prior: SigmaPrior, scheme: str = "riemann",
                    R: int = 200, seed: Optional[int] = None) -> Estimate:
    """Integrate ``Z_hat(sigma) g(sigma)`` over sigma.

    ``scheme="riemann"`` uses the midpoint rule on ``R`` cells; ``"monte_carlo"``
    averages ``Z_hat`` at ``R`` draws from the prior.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if scheme == "riemann":
        nodes = riemann_nodes(prior, R)
        width = (prior.b - prior.a) / R
        logs = curve.log_value(nodes) + prior.log_density(nodes) + np.log(width)
        lz = float(logsumexp(logs))
    elif scheme == "monte_carlo":
        nodes = prior.sample(np.random.default_rng(seed), R)
        lz = float(logsumexp(curve.log_value(nodes)) - np.log(R))
    else:
        raise ValueError(f"unknown evidence scheme {scheme!r}")
    return Estimate(float(np.exp(lz)), lz)


class SigmaMarginal:
    """Approximate marginal posterior ``Z_hat(sigma) g(sigma) / Z_hat``."""

    def __init__(self, curve: EvidenceCurve, prior: SigmaPrior, log_Z: float):
        if not np.isfinite(log_Z):
            raise ValueError("evidence must be positive and finite")
        self.curve, self.prior, self.log_Z = curve, prior, log_Z

    def log_pdf(self, sigma):
        s = np.asarray(sigma, dtype=float)
        lp = np.asarray(self.prior.log_density(s), dtype=float)
        out = np.full(s.shape, -np.inf)
        inside = np.isfinite(lp)
        if inside.any():
            out[inside] = self.curve.log_value(s[inside]) + lp[inside] - self.log_Z
        return out if out.ndim else float(out)

    def __call__(self, sigma):
        return np.exp(self.log_pdf(sigma))

    def grid(self, n: int = 1000):
        """Midpoint nodes, cell width and density values on the prior support."""
        nodes = riemann_nodes(self.prior, n)
        return nodes, (self.prior.b - self.prior.a) / n, self(nodes)

    def moments(self, n: int = 1000):
        """Mean and variance by midpoint quadrature, renormalised on the grid."""
        nodes, width, pdf = self.grid(n)
        mass = pdf.sum() * width
        mean = float(np.sum(nodes * pdf) * width / mass)
        var = float(np.sum((nodes - mean) ** 2 * pdf) * width / mass)
        return mean, var

    def cdf_on_grid(self, n: int = 1000):
        nodes, width, pdf = self.grid(n)
        edges = self.prior.a + width * np.arange(n + 1)
        cdf = np.concatenate([[0.0], np.cumsum(pdf) * width])
        return edges, cdf / cdf[-1]


def marginal_posterior_sigma(curve: EvidenceCurve, prior: SigmaPrior, log_Z: float) -> SigmaMarginal:
    return SigmaMarginal(curve, prior, log_Z)


def sigma_map_marg(curve: EvidenceCurve, prior: SigmaPrior, n_grid: int = 400,
                   rtol: float = 1e-6) -> float:
    """Maximiser of ``Z_hat(sigma) g(sigma)``: grid scan, then bounded Brent refinement."""
    nodes = riemann_nodes(prior, n_grid)
    vals = curve.log_value(nodes) + prior.log_density(nodes)
    i = int(np.argmax(vals))
    if not np.isfinite(vals[i]) or np.ptp(vals[np.isfinite(vals)]) == 0:
        warnings.warn("flat objective; returning the grid argmax", RuntimeWarning, stacklevel=2)
        return float(nodes[i])
    width = nodes[1] - nodes[0] if n_grid > 1 else prior.b - prior.a
    lo = max(nodes[i] - width, prior.a + 1e-12 * prior.b)
    hi = min(nodes[i] + width, prior.b)
    res = optimize.minimize_scalar(lambda s: -curve.log_value(s), bounds=(lo, hi),
                                   method="bounded",
                                   options={"xatol": rtol * nodes[i]})
    return float(res.x) if -res.fun >= vals[i] else float(nodes[i])


@dataclass
class McmcConfig:
    J: int = 5000
    burn_in: int = 500
    step: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.J < 1 or self.burn_in < 0:
            raise ValueError("J must be >= 1 and burn_in >= 0")
        if not self.step > 0:
            raise ValueError("step must be positive")


@dataclass
class McmcResult:
    draws: np.ndarray
    acceptance_rate: float


def noisy_mcmc_sigma(curve: EvidenceCurve, prior: SigmaPrior, cfg: McmcConfig,
                     init: Optional[float] = None) -> McmcResult:
    """Random-walk Metropolis on ``log sigma`` targeting ``Z_hat(sigma) g(sigma)``."""
    def log_target(x):
        s = np.exp(x)
        lp = float(prior.log_density(s))
        if not np.isfinite(lp):
            return -np.inf
        return curve.log_value(s) + lp + x     # + x: Jacobian of sigma = exp(x)

    if init is None:
        init = 0.5 * (prior.a + prior.b)
    if not np.isfinite(prior.log_density(init)):
        raise ValueError("initial sigma lies outside the prior support")
    rng = np.random.default_rng(cfg.seed)
    x = np.log(init)
    cur = log_target(x)
    total = cfg.burn_in + cfg.J
    steps = cfg.step * rng.standard_normal(total)
    logu = np.log(rng.random(total))
    draws = np.empty(cfg.J)
    accepted = 0
    for i in range(total):
        xp = x + steps[i]
        new = log_target(xp)
        if logu[i] < new - cur:
            x, cur = xp, new
            accepted += 1
        if i >= cfg.burn_in:
            draws[i - cfg.burn_in] = np.exp(x)
    if accepted == 0:
        raise McmcError("sigma chain never accepted a move")
    return McmcResult(draws, accepted / total)


class JointPosteriorApprox:
    """Particle approximation of ``p(theta, sigma | y)`` over recycled particles.

    Each sigma draw reweights the same particle set; repeated draws (common
    after rejections) share one weight vector.
    """

    def __init__(self, store: ParticleStore, sigma_draws):
        draws = np.asarray(sigma_draws, dtype=float).ravel()
        if draws.size == 0:
            raise ValueError("need at least one sigma draw")
        self.store = store
        self.sigma_draws = draws
        self.unique_sigmas, self._inverse, self.counts = np.unique(
            draws, return_inverse=True, return_counts=True)

    def normalized_weights(self, j: int) -> np.ndarray:
        return normalized_rho(self.store, self.sigma_draws[j])

    def expectation(self, h: Callable[[np.ndarray, float], np.ndarray]) -> float:
        theta = self.store.theta
        total = 0.0
        for s, c in zip(self.unique_sigmas, self.counts):
            w = normalized_rho(self.store, s)
            hv = np.broadcast_to(np.asarray(h(theta, s), dtype=float), w.shape)
            total += c * float(w @ hv)
        return total / self.sigma_draws.size

    def resample(self, count: int, rng: np.random.Generator):
        if count < 1:
            raise ValueError("count must be >= 1")
        J = self.sigma_draws.size
        picks = rng.integers(J, size=count)
        uidx = self._inverse[picks]
        theta_idx = np.empty(count, dtype=int)
        n = len(self.store)
        for u in np.unique(uidx):
            slots = np.flatnonzero(uidx == u)
            w = normalized_rho(self.store, self.unique_sigmas[u])
            theta_idx[slots] = rng.choice(n, size=slots.size, p=w)
        return self.store.theta[theta_idx], self.sigma_draws[picks]


def joint_expectation(store: ParticleStore, sigma_draws, h) -> float:
    """Average over draws of the ``rho``-weighted particle mean of ``h(theta, sigma)``."""
    return JointPosteriorApprox(store, sigma_draws).expectation(h)


def sir_resample_joint(store: ParticleStore, sigma_draws, count: int, seed=None):
    """Unweighted ``(theta, sigma)`` samples by sampling-importance-resampling."""
    return JointPosteriorApprox(store, sigma_draws).resample(count, np.random.default_rng(seed))


@dataclass
class PostSummary:
    curve: EvidenceCurve
    Z: Estimate
    marginal: SigmaMarginal
    sigma_map_marg: float
    sigma_mean: float
    sigma_var: float
    mcmc: Optional[McmcResult] = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {"Z_hat": self.Z.value, "log_Z_hat": self.Z.log_value,
               "sigma_map_marg": self.sigma_map_marg, "sigma_mean": self.sigma_mean,
               "sigma_var": self.sigma_var}
        if self.mcmc is not None:
            out["mcmc_acceptance"] = self.mcmc.acceptance_rate
            out["mcmc_sigma_mean"] = float(np.mean(self.mcmc.draws))
        return out


def run_post(store: ParticleStore, prior: SigmaPrior, scheme: str = "riemann", R: int = 200,
             evidence_seed: Optional[int] = None, mcmc: Optional[McmcConfig] = None,
             moment_grid: int = 1000) -> PostSummary:
    """Evidence, sigma marginal (moments by quadrature) and optionally a sigma chain."""
    curve = EvidenceCurve(store)
    Z = global_evidence(curve, prior, scheme, R, evidence_seed)
    marginal = SigmaMarginal(curve, prior, Z.log_value)
    smap = sigma_map_marg(curve, prior)
    mean, var = marginal.moments(moment_grid)
    chain = None
    if mcmc is not None:
        chain = noisy_mcmc_sigma(curve, prior, mcmc, init=smap)
    return PostSummary(curve, Z, marginal, smap, mean, var, chain)
