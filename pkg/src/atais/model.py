"""Observation models, priors and log-domain density evaluations.

All densities are handled as logarithms. A residual of ``+inf`` is a
first-class value meaning the forward map is undefined at that point, which
translates into zero likelihood.
"""
from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Dataset:
    """Observed vector ``y`` with optional acquisition times (days)."""

    y: np.ndarray
    times: Optional[np.ndarray] = None

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if y.ndim != 1 or y.size < 1:
            raise ValueError("y must be a non-empty vector")
        if not np.all(np.isfinite(y)):
            raise ValueError("y has non-finite entries")
        object.__setattr__(self, "y", y)
        if self.times is not None:
            t = np.atleast_1d(np.asarray(self.times, dtype=float))
            if t.shape != y.shape:
                raise ValueError("times and y must have the same length")
            if not np.all(np.isfinite(t)):
                raise ValueError("times has non-finite entries")
            object.__setattr__(self, "times", t)

    @property
    def K(self) -> int:
        return self.y.size


@dataclass(frozen=True)
class BoxPrior:
    """Uniform density over an axis-aligned box."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError("box requires lower < upper in every coordinate")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def sides(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def log_volume(self) -> float:
        return float(np.sum(np.log(self.sides)))

    def contains(self, thetas) -> np.ndarray:
        thetas = np.atleast_2d(thetas)
        return np.all((thetas >= self.lower) & (thetas <= self.upper), axis=1)

    def log_density(self, thetas) -> np.ndarray:
        inside = self.contains(thetas)
        return np.where(inside, -self.log_volume, -np.inf)


@dataclass(frozen=True)
class SigmaPrior:
    """Uniform prior on the noise scale over ``(a, b]``."""

    a: float
    b: float

    def __post_init__(self):
        if not (0.0 <= self.a < self.b) or not np.isfinite(self.b):
            raise ValueError(f"invalid sigma prior support ({self.a}, {self.b}]")

    def log_density(self, sigma) -> np.ndarray:
        s = np.asarray(sigma, dtype=float)
        inside = (s > self.a) & (s <= self.b)
        return np.where(inside, -np.log(self.b - self.a), -np.inf)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        # (a, b]: flip numpy's [0, 1) so that a itself is never drawn
        return self.b - (self.b - self.a) * rng.random(size)


class ObservationModel:
    """A forward map ``f: R^M -> R^K`` bundled with data and a box prior.

    Subclasses implement :meth:`forward` on a batch of parameter rows.
    Every row passed through :meth:`residuals` counts as one forward-map
    evaluation in :attr:`n_forward_evals`.
    """

    def __init__(self, dataset: Dataset, prior: BoxPrior,
                 log_prior: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 workers: int = 1):
        self.dataset = dataset
        self.prior = prior
        self._log_prior_hook = log_prior
        self.workers = max(1, int(workers))
        self._lock = threading.Lock()
        self._n_evals = 0

    @property
    def dim(self) -> int:
        return self.prior.dim

    @property
    def K(self) -> int:
        return self.dataset.K

    @property
    def uniform_prior(self) -> bool:
        return self._log_prior_hook is None

    @property
    def n_forward_evals(self) -> int:
        return self._n_evals

    def reset_counter(self):
        with self._lock:
            self._n_evals = 0

    def forward(self, thetas: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_prior(self, thetas) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        lp = self.prior.log_density(thetas)
        if self._log_prior_hook is not None:
            inside = np.isfinite(lp)
            extra = np.full(lp.shape, -np.inf)
            if inside.any():
                extra[inside] = self._log_prior_hook(thetas[inside])
            lp = extra
        return lp

    def _residuals_chunk(self, thetas: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            f = np.asarray(self.forward(thetas), dtype=float)
        if f.ndim == 1 and thetas.shape[0] == 1:
            f = f[None, :]
        if f.shape != (thetas.shape[0], self.K):
            raise ValueError(
                f"forward map returned shape {f.shape}, expected "
                f"{(thetas.shape[0], self.K)}")
        bad = ~np.all(np.isfinite(f), axis=1)
        with np.errstate(all="ignore"):
            v = np.sum((self.dataset.y - f) ** 2, axis=1)
        v[bad] = np.inf
        with self._lock:
            self._n_evals += thetas.shape[0]
        return v

    def residuals(self, thetas) -> np.ndarray:
        """Squared residual norms ``||y - f(theta)||^2`` for each row."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        if thetas.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} parameters, got {thetas.shape[1]}")
        n = thetas.shape[0]
        if self.workers == 1 or n < 2 * self.workers:
            return self._residuals_chunk(thetas)
        chunks = np.array_split(np.arange(n), self.workers)
        with ThreadPoolExecutor(self.workers) as pool:
            parts = list(pool.map(lambda idx: self._residuals_chunk(thetas[idx]), chunks))
        # gathered in chunk order, so the result does not depend on scheduling
        return np.concatenate(parts)


class FunctionModel(ObservationModel):
    """Wraps a vectorised callable ``forward(thetas) -> (N, K)``."""

    def __init__(self, forward: Callable[[np.ndarray], np.ndarray], dataset: Dataset,
                 prior: BoxPrior, **kwargs):
        super().__init__(dataset, prior, **kwargs)
        self._forward = forward

    def forward(self, thetas):
        return self._forward(thetas)


def residual_ss(model: ObservationModel, theta) -> float:
    """Squared residual for a single parameter vector (one forward call)."""
    theta = np.asarray(theta, dtype=float).reshape(1, -1)
    return float(model.residuals(theta)[0])


def log_likelihood(V, K: int, sigma):
    """Gaussian log-likelihood from the residual ``V`` and noise scale ``sigma``."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    if K < 1:
        raise ValueError("K must be >= 1")
    V = np.asarray(V, dtype=float)
    with np.errstate(invalid="ignore"):
        out = -0.5 * K * (LOG_2PI + 2.0 * np.log(sigma)) - V / (2.0 * sigma ** 2)
    out = np.where(np.isposinf(V), -np.inf, out)
    return out if out.ndim else float(out)


def sigma_ml_given_theta(V, K: int):
    """Noise scale maximising the likelihood for a fixed residual ``V``."""
    if K < 1:
        raise ValueError("K must be >= 1")
    out = np.sqrt(np.asarray(V, dtype=float) / K)
    return out if out.ndim else float(out)


def log_tempered_posterior(model: ObservationModel, theta, sigma: float):
    """Unnormalised ``log l(y|theta, sigma) + log g(theta)`` for one or many rows."""
    thetas = np.atleast_2d(np.asarray(theta, dtype=float))
    V = model.residuals(thetas)
    out = log_likelihood(V, model.K, sigma) + model.log_prior(thetas)
    return float(out[0]) if np.ndim(theta) <= 1 else out
