"""Adaptive importance sampling with automatic tempering.

At iteration ``t`` particles are drawn from a Gaussian proposal and weighted
against the tempered conditional posterior ``l(y|theta, s_{t-1}) g(theta)``,
where ``s_{t-1}`` is the running maximum-likelihood noise scale. The best
residual seen so far sets both the MAP estimate (which becomes the next
proposal mean) and the next noise scale ``sqrt(V_min / K)``, which is capped
at the current scale so that the temperature never rises.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple, Optional

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .model import LOG_2PI, ObservationModel, log_likelihood

log = logging.getLogger(__name__)

# default covariance floor is EPS_SCALE * (mean box side)^2
EPS_SCALE = 1.25e-3


class ProposalError(linalg.LinAlgError):
    """Proposal covariance is not positive definite."""


class GaussianProposal:
    """Multivariate normal proposal with a cached Cholesky factor."""

    def __init__(self, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean length {mean.size}")
        cov = 0.5 * (cov + cov.T)
        try:
            chol = linalg.cholesky(cov, lower=True)
        except linalg.LinAlgError as exc:
            raise ProposalError(f"proposal covariance not positive definite: {exc}") from exc
        if not np.all(np.isfinite(chol)):
            raise ProposalError("proposal covariance has non-finite entries")
        self.mean = mean
        self.cov = cov
        self.chol = chol

    @property
    def dim(self) -> int:
        return self.mean.size

    def log_pdf(self, thetas) -> np.ndarray:
        thetas = np.atleast_2d(thetas)
        z = linalg.solve_triangular(self.chol, (thetas - self.mean).T, lower=True)
        logdet = np.sum(np.log(np.diag(self.chol)))
        return -0.5 * self.dim * LOG_2PI - logdet - 0.5 * np.sum(z ** 2, axis=0)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_dict(cls, d) -> "GaussianProposal":
        return cls(d["mean"], d["cov"])


def iteration_rng(seed: int, t: int) -> np.random.Generator:
    """Counter-based stream for iteration ``t``; row ``n`` of its draws is particle ``n``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(t,))))


def sample_proposal(q: GaussianProposal, N: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((N, q.dim))
    return q.mean + z @ q.chol.T


@dataclass
class AtaisConfig:
    N: int
    T: int
    sigma0: float
    mu0: np.ndarray
    cov0: np.ndarray
    eps: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.N < 1 or self.T < 1:
            raise ValueError("N and T must be >= 1")
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if self.eps is not None and not self.eps > 0:
            raise ValueError("eps must be positive")
        self.mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        cov0 = np.asarray(self.cov0, dtype=float)
        # a vector is read as the diagonal
        self.cov0 = np.diag(np.atleast_1d(cov0)) if cov0.ndim <= 1 else cov0

    def resolve_eps(self, model: ObservationModel) -> float:
        if self.eps is not None:
            return self.eps
        return EPS_SCALE * float(np.mean(model.prior.sides)) ** 2


@dataclass(frozen=True)
class TemperState:
    sigma_ml: float
    theta_map: np.ndarray
    v_min: float
    log_pi_map: float
    K: int


class ParticleRecord(NamedTuple):
    theta: np.ndarray
    log_w: float
    residual: float
    t: int
    n: int
    proposal_id: int


class ParticleStore:
    """Append-only record of every weighted particle and the proposal that drew it.

    Per-particle arrays are flattened in ``(t, n)`` order; ``t`` is 1-based.
    """

    def __init__(self, K: int, dim: int, sigma0: float):
        self.K = K
        self.dim = dim
        self.proposals: list[GaussianProposal] = []
        self.sigma_schedule: list[float] = [float(sigma0)]
        self._blocks: dict[str, list[np.ndarray]] = {
            k: [] for k in ("theta", "log_w", "residual", "log_q", "log_prior", "sigma_prev")}
        self._cache: dict[str, np.ndarray] = {}

    def append(self, thetas, log_w, residuals, log_q, log_prior, sigma_prev, proposal):
        n = thetas.shape[0]
        for key, val in (("theta", thetas), ("log_w", log_w), ("residual", residuals),
                         ("log_q", log_q), ("log_prior", log_prior)):
            arr = np.array(val, dtype=float)
            arr.setflags(write=False)
            self._blocks[key].append(arr)
        self._blocks["sigma_prev"].append(np.full(n, float(sigma_prev)))
        self.proposals.append(proposal)
        self._cache.clear()

    def _flat(self, key):
        if key not in self._cache:
            blocks = self._blocks[key]
            if not blocks:
                shape = (0, self.dim) if key == "theta" else (0,)
                arr = np.empty(shape)
            else:
                arr = np.concatenate(blocks)
            arr.setflags(write=False)
            self._cache[key] = arr
        return self._cache[key]

    theta = property(lambda self: self._flat("theta"))
    log_w = property(lambda self: self._flat("log_w"))
    residual = property(lambda self: self._flat("residual"))
    log_q = property(lambda self: self._flat("log_q"))
    log_prior = property(lambda self: self._flat("log_prior"))
    sigma_prev = property(lambda self: self._flat("sigma_prev"))

    @property
    def iteration(self) -> np.ndarray:
        return np.concatenate([np.full(b.shape[0], t + 1) for t, b in
                               enumerate(self._blocks["log_w"])]) if self else np.empty(0, int)

    @property
    def index(self) -> np.ndarray:
        return np.concatenate([np.arange(b.shape[0]) for b in
                               self._blocks["log_w"]]) if self else np.empty(0, int)

    @property
    def n_iterations(self) -> int:
        return len(self.proposals)

    def __len__(self) -> int:
        return sum(b.shape[0] for b in self._blocks["log_w"])

    def records(self) -> Iterator[ParticleRecord]:
        for t, (th, lw, res) in enumerate(zip(self._blocks["theta"], self._blocks["log_w"],
                                              self._blocks["residual"]), start=1):
            for n in range(th.shape[0]):
                yield ParticleRecord(th[n], float(lw[n]), float(res[n]), t, n, t - 1)


def weigh_particles(model: ObservationModel, particles, sigma_prev: float,
                    q: GaussianProposal):
    """Log IS weights against the tempered posterior at ``sigma_prev``.

    Exactly one forward evaluation per particle. Returns ``(log_w, residuals)``.
    """
    particles = np.atleast_2d(particles)
    residuals = model.residuals(particles)
    lp = model.log_prior(particles)
    log_w = log_likelihood(residuals, model.K, sigma_prev) + lp - q.log_pdf(particles)
    return np.where(np.isfinite(lp), log_w, -np.inf), residuals


def update_current_max(particles, residuals, K: int, log_prior=None):
    """Best particle of one iteration, or ``None`` if no candidate is usable.

    Under a uniform prior the argmax of the tempered posterior is the
    argmin of the residual whatever the temperature; the first minimum wins.
    Particles with ``log_prior = -inf`` (outside the box) are never selected.
    """
    residuals = np.asarray(residuals, dtype=float)
    if log_prior is not None:
        residuals = np.where(np.isfinite(log_prior), residuals, np.inf)
    if residuals.size == 0 or not np.any(np.isfinite(residuals)):
        return None
    i = int(np.argmin(residuals))
    v = float(residuals[i])
    return np.array(np.atleast_2d(particles)[i], dtype=float), v, float(np.sqrt(v / K))


def profile_log_pi(v: float, K: int, log_prior: float = 0.0) -> float:
    """``log l(y|theta, sqrt(v/K)) + log g(theta)``: likelihood maximised over sigma."""
    if not np.isfinite(v):
        return -np.inf
    if v == 0:
        return np.inf
    return -0.5 * K * (LOG_2PI + np.log(v / K) + 1.0) + log_prior


def update_global_max(state: TemperState, theta_hat, v_hat: float,
                      log_prior_hat: float = 0.0) -> TemperState:
    """Accept the iteration's best particle if its residual is no worse (ties accept)."""
    if not v_hat <= state.v_min:
        return state
    return replace(state, theta_map=np.array(theta_hat, dtype=float), v_min=float(v_hat),
                   sigma_ml=float(np.sqrt(v_hat / state.K)),
                   log_pi_map=profile_log_pi(v_hat, state.K, log_prior_hat))


def normalize_log_weights(log_w) -> np.ndarray:
    """Self-normalised linear weights via max-shift; all zeros if every weight is -inf."""
    log_w = np.asarray(log_w, dtype=float)
    if not np.any(np.isfinite(log_w)):
        return np.zeros_like(log_w)
    return np.exp(log_w - logsumexp(log_w))


def weighted_covariance(particles, weights) -> np.ndarray:
    x = np.atleast_2d(particles)
    centred = x - weights @ x
    return (centred * weights[:, None]).T @ centred


def adapt_proposal(particles, log_w, theta_map, eps: float,
                   previous: Optional[GaussianProposal] = None) -> GaussianProposal:
    """Next proposal: mean at the global MAP, weighted covariance plus ``eps I``."""
    particles = np.atleast_2d(particles)
    M = particles.shape[1]
    if not np.any(np.isfinite(log_w)):
        if previous is None:
            raise ValueError("no finite weights and no previous proposal to fall back on")
        warnings.warn("all importance weights vanish; keeping the previous covariance",
                      RuntimeWarning, stacklevel=2)
        return GaussianProposal(theta_map, previous.cov)
    wbar = normalize_log_weights(log_w)
    cov = weighted_covariance(particles, wbar) + eps * np.eye(M)
    return GaussianProposal(theta_map, cov)


def run_atais(model: ObservationModel, config: AtaisConfig):
    """Run ``config.T`` iterations; returns ``(TemperState, ParticleStore)``."""
    if config.mu0.size != model.dim:
        raise ValueError(f"mu0 has length {config.mu0.size}, model dimension is {model.dim}")
    if not model.uniform_prior:
        warnings.warn("non-uniform parameter prior: the conditional MAP may drift with the "
                      "temperature, so the tempering sequence is only a heuristic here",
                      UserWarning, stacklevel=2)
    eps = config.resolve_eps(model)
    K = model.K
    state = TemperState(sigma_ml=float(config.sigma0), theta_map=config.mu0.copy(),
                        v_min=np.inf, log_pi_map=-np.inf, K=K)
    store = ParticleStore(K, model.dim, config.sigma0)
    q = GaussianProposal(config.mu0, config.cov0)

    for t in range(1, config.T + 1):
        sigma_prev = store.sigma_schedule[-1]
        thetas = sample_proposal(q, config.N, iteration_rng(config.seed, t))
        log_w, resid = weigh_particles(model, thetas, sigma_prev, q)
        log_prior = model.log_prior(thetas)
        store.append(thetas, log_w, resid, q.log_pdf(thetas), log_prior, sigma_prev, q)

        best = update_current_max(thetas, resid, K, log_prior)
        if best is None:
            log.warning("iteration %d: no particle inside the prior support", t)
        else:
            theta_hat, v_hat, _ = best
            i = int(np.argmin(np.where(np.isfinite(log_prior), resid, np.inf)))
            state = update_global_max(state, theta_hat, v_hat, float(log_prior[i]))
        # the temperature only ever cools: an early sigma_ml estimate above the
        # current scale (a poor first population) leaves the scale where it is
        store.sigma_schedule.append(min(sigma_prev, state.sigma_ml))
        log.debug("iteration %d: sigma_ml=%.6g v_min=%.6g", t, state.sigma_ml, state.v_min)
        q = adapt_proposal(thetas, log_w, state.theta_map, eps, previous=q)
    if state.sigma_ml > store.sigma_schedule[-1]:
        warnings.warn(f"sigma0={config.sigma0:g} lies below the estimated sigma_ml="
                      f"{state.sigma_ml:.4g}; restart with a larger sigma0", RuntimeWarning,
                      stacklevel=2)
    return state, store


def corrected_log_weights(store: ParticleStore, sigma_final: Optional[float] = None) -> np.ndarray:
    """Unnormalised log weights re-targeted to the final temperature.

    Uses only the cached residuals, so no forward evaluations happen here.
    """
    if sigma_final is None:
        sigma_final = store.sigma_schedule[-1]
    s_prev = store.sigma_prev
    e = store.residual
    lw = store.log_w
    with np.errstate(invalid="ignore"):
        delta = (store.K * np.log(s_prev / sigma_final)
                 + e * (1.0 / (2 * s_prev ** 2) - 1.0 / (2 * sigma_final ** 2)))
    return np.where(np.isfinite(lw) & np.isfinite(e), lw + delta, -np.inf)


def correct_weights(store: ParticleStore, sigma_final: Optional[float] = None) -> np.ndarray:
    """Normalised corrected weights summing to one."""
    return normalize_log_weights(corrected_log_weights(store, sigma_final))


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    s2 = np.sum(w ** 2)
    return float(np.sum(w) ** 2 / s2) if s2 > 0 else 0.0


@dataclass
class PosteriorSummary:
    mean: np.ndarray
    cov: np.ndarray
    theta_map: np.ndarray
    ess: float
    warnings: list = field(default_factory=list)


def posterior_estimates(store: ParticleStore, weights, state: Optional[TemperState] = None):
    """Self-normalised mean and covariance of the final conditional posterior."""
    w = np.asarray(weights, dtype=float)
    x = store.theta
    mean = w @ x
    cov = weighted_covariance(x, w)
    if state is not None:
        theta_map = state.theta_map
    else:
        theta_map = x[int(np.argmin(store.residual))]
    ess = effective_sample_size(w)
    notes = []
    if ess < 2:
        notes.append(f"effective sample size {ess:.3g} < 2; estimates are degenerate")
    return PosteriorSummary(mean, cov, np.array(theta_map), ess, notes)
