"""Plain population Monte Carlo over the joint space ``[theta, sigma]``.

This is the comparison method: one Gaussian proposal on ``M + 1``
dimensions, adapted to the weighted mean and weighted covariance of the
last population. The noise scale is sampled like any other coordinate, so
there is no tempering and no MAP anchoring.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .core import (EPS_SCALE, GaussianProposal, iteration_rng, normalize_log_weights,
                   sample_proposal, weighted_covariance)
from .model import ObservationModel, SigmaPrior, log_likelihood
from .post import Estimate


@dataclass
class BaselineConfig:
    N: int
    T: int
    mu0: np.ndarray
    cov0: np.ndarray
    eps: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.N < 1 or self.T < 1:
            raise ValueError("N and T must be >= 1")
        self.mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        cov0 = np.asarray(self.cov0, dtype=float)
        self.cov0 = np.diag(np.atleast_1d(cov0)) if cov0.ndim <= 1 else cov0


@dataclass
class BaselineResult:
    theta: np.ndarray
    sigma: np.ndarray
    log_w: np.ndarray
    residual: np.ndarray
    iteration: np.ndarray
    Z: Estimate
    proposals: list = field(default_factory=list)

    @property
    def n_forward_evals(self) -> int:
        return self.residual.size


def joint_log_weights(model: ObservationModel, sigma_prior: SigmaPrior, particles,
                      q: GaussianProposal):
    """Log weights of joint particles ``[theta, sigma]``; returns ``(log_w, residuals)``."""
    theta, sigma = particles[:, :-1], particles[:, -1]
    residuals = model.residuals(theta)
    lg_s = sigma_prior.log_density(sigma)
    ok = np.isfinite(lg_s)
    log_w = np.full(particles.shape[0], -np.inf)
    if ok.any():
        log_w[ok] = (log_likelihood(residuals[ok], model.K, sigma[ok])
                     + model.log_prior(theta[ok]) + lg_s[ok] - q.log_pdf(particles[ok]))
    return log_w, residuals


def run_standard_ais(model: ObservationModel, sigma_prior: SigmaPrior,
                     config: BaselineConfig) -> BaselineResult:
    M = model.dim + 1
    if config.mu0.size != M:
        raise ValueError(f"mu0 must have length {M} (parameters plus sigma)")
    if config.eps is None:
        sides = np.append(model.prior.sides, sigma_prior.b - sigma_prior.a)
        eps = EPS_SCALE * float(np.mean(sides)) ** 2
    else:
        eps = config.eps
    q = GaussianProposal(config.mu0, config.cov0)
    parts, logws, resids, proposals = [], [], [], []
    for t in range(1, config.T + 1):
        x = sample_proposal(q, config.N, iteration_rng(config.seed, t))
        lw, res = joint_log_weights(model, sigma_prior, x, q)
        parts.append(x)
        logws.append(lw)
        resids.append(res)
        proposals.append(q)
        if np.any(np.isfinite(lw)):
            wbar = normalize_log_weights(lw)
            q = GaussianProposal(wbar @ x, weighted_covariance(x, wbar) + eps * np.eye(M))
        else:
            warnings.warn(f"iteration {t}: all joint weights vanish; proposal unchanged",
                          RuntimeWarning, stacklevel=2)
    x = np.concatenate(parts)
    lw = np.concatenate(logws)
    lz = float(logsumexp(lw) - np.log(lw.size)) if np.any(np.isfinite(lw)) else -np.inf
    return BaselineResult(theta=x[:, :-1], sigma=x[:, -1], log_w=lw,
                          residual=np.concatenate(resids),
                          iteration=np.repeat(np.arange(1, config.T + 1), config.N),
                          Z=Estimate(float(np.exp(lz)), lz), proposals=proposals)
