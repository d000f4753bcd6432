"""Linear-Gaussian model ``f(theta) = H theta + b`` with closed-form posteriors.

Used as an analytic reference: with a box wide enough that truncation is
negligible, the conditional posterior is Gaussian and the conditional
evidence has a closed form.
"""
from __future__ import annotations

import numpy as np
from scipy import integrate, stats

from ..model import LOG_2PI, BoxPrior, Dataset, ObservationModel, SigmaPrior


class LinearModel(ObservationModel):

    def __init__(self, H, dataset: Dataset, lower, upper, offset=None, **kwargs):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        super().__init__(dataset, BoxPrior(lower, upper), **kwargs)
        if H.shape != (self.K, self.dim):
            raise ValueError(f"H must be {(self.K, self.dim)}, got {H.shape}")
        self.H = H
        self.offset = np.zeros(self.K) if offset is None else np.asarray(offset, dtype=float)

    def forward(self, thetas):
        return np.asarray(thetas, dtype=float) @ self.H.T + self.offset

    # -- closed forms, valid when the box truncation is negligible --------------

    def least_squares(self):
        """Least-squares solution and its residual ``V_min``."""
        z = self.dataset.y - self.offset
        sol, *_ = np.linalg.lstsq(self.H, z, rcond=None)
        r = z - self.H @ sol
        return sol, float(r @ r)

    def posterior_moments(self, sigma):
        mean, _ = self.least_squares()
        cov = sigma ** 2 * np.linalg.inv(self.H.T @ self.H)
        return mean, cov

    def log_conditional_evidence(self, sigma):
        """``log Z(sigma)`` integrating over all of R^M (untruncated)."""
        _, vmin = self.least_squares()
        sigma = np.asarray(sigma, dtype=float)
        _, logdet = np.linalg.slogdet(self.H.T @ self.H)
        M, K = self.dim, self.K
        return (-0.5 * K * (LOG_2PI + 2 * np.log(sigma)) - vmin / (2 * sigma ** 2)
                + 0.5 * M * (LOG_2PI + 2 * np.log(sigma)) - 0.5 * logdet
                - self.prior.log_volume)

    def evidence(self, sigma_prior: SigmaPrior) -> float:
        """Global evidence by 1-D adaptive quadrature over the noise scale."""
        def integrand(s):
            return np.exp(self.log_conditional_evidence(s)) / (sigma_prior.b - sigma_prior.a)
        val, _ = integrate.quad(integrand, sigma_prior.a, sigma_prior.b, limit=200)
        return val


def truncated_normal_evidence(y: float, sigma, lower=0.0, upper=1.0):
    """``Z(sigma)`` for ``f(theta) = theta``, one datum, uniform prior on [lower, upper]."""
    sigma = np.asarray(sigma, dtype=float)
    mass = stats.norm.cdf((upper - y) / sigma) - stats.norm.cdf((lower - y) / sigma)
    return mass / (upper - lower)


def simulate_linear(H, theta_true, sigma_true, seed=0, offset=None) -> Dataset:
    H = np.atleast_2d(np.asarray(H, dtype=float))
    rng = np.random.default_rng(seed)
    clean = H @ np.asarray(theta_true, dtype=float)
    if offset is not None:
        clean = clean + offset
    return Dataset(clean + sigma_true * rng.standard_normal(H.shape[0]))
