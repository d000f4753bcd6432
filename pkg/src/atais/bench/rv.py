"""Keplerian radial-velocity model for a star hosting ``S`` non-interacting planets.

Parameter layout: ``[V0, A_1, omega_1, e_1, P_1, tau_1, ..., A_S, ..., tau_S]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import BoxPrior, Dataset, ObservationModel

TWO_PI = 2.0 * np.pi
PARAMS_PER_PLANET = 5


class KeplerSolverError(ArithmeticError):
    pass


@dataclass(frozen=True)
class OrbitParams:
    P: float       # period, days
    A: float       # amplitude, m/s
    e: float       # eccentricity
    omega: float   # argument of perigee, rad
    tau: float     # periastron passage, days

    def __post_init__(self):
        if not self.P > 0:
            raise ValueError("period must be positive")
        if not 0.0 <= self.e < 1.0:
            raise ValueError("eccentricity must lie in [0, 1)")


# simulated two-planet system (periods and tau in days, amplitudes in m/s)
TRUE_PLANETS = (
    OrbitParams(P=15.0, A=25.0, e=0.1, omega=0.61, tau=3.0),
    OrbitParams(P=115.0, A=5.0, e=0.0, omega=0.17, tau=24.0),
)
V0_TRUE = 5.0
SIGMA_TRUE = 3.0
K_DEFAULT = 120


def mean_anomaly(t, P, tau):
    return TWO_PI / np.asarray(P, dtype=float) * (np.asarray(t, dtype=float) - tau)


def solve_kepler(M, e, tol=1e-12, max_iter=10**6):
    """Eccentric anomaly ``E`` with ``E - e sin E = M (mod 2 pi)``.

    ``M`` is wrapped to ``[0, 2 pi)`` and ``E`` is returned in the same
    branch. Newton-Raphson runs from the usual ``M + 0.85 e sign(sin M)``
    start; entries that have not converged after a few dozen steps (or
    ``max_iter``, whichever is smaller) are finished by bisection on
    ``[0, 2 pi]``, where the Kepler function is monotone.
    """
    M = np.asarray(M, dtype=float)
    e = np.asarray(e, dtype=float)
    if np.any(e < 0) or np.any(e >= 1):
        raise ValueError("eccentricity must lie in [0, 1)")
    scalar = M.ndim == 0 and e.ndim == 0
    M, e = np.broadcast_arrays(np.atleast_1d(M), np.atleast_1d(e))
    shape = M.shape
    M, e = M.ravel(), e.ravel()
    Mw = np.mod(M, TWO_PI)
    if not np.all(np.isfinite(Mw)):
        raise KeplerSolverError("non-finite mean anomaly")

    E = np.clip(Mw + 0.85 * e * np.sign(np.sin(Mw)), 0.0, TWO_PI)
    todo = np.ones(E.shape, dtype=bool)
    for _ in range(min(max_iter, 50)):
        g = E[todo] - e[todo] * np.sin(E[todo]) - Mw[todo]
        done = np.abs(g) <= tol
        idx = np.flatnonzero(todo)
        todo[idx[done]] = False
        if not todo.any():
            break
        idx = idx[~done]
        step = g[~done] / (1.0 - e[idx] * np.cos(E[idx]))
        E[idx] = np.clip(E[idx] - step, 0.0, TWO_PI)

    if todo.any():
        idx = np.flatnonzero(todo)
        lo = np.zeros(idx.size)
        hi = np.full(idx.size, TWO_PI)
        ei, mi = e[idx], Mw[idx]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            g = mid - ei * np.sin(mid) - mi
            lo = np.where(g < 0, mid, lo)
            hi = np.where(g < 0, hi, mid)
            if np.all(np.abs(g) <= tol) or np.all(hi - lo <= 4 * np.finfo(float).eps):
                break
        # bisection midpoint minimises |g| to within rounding
        E[idx] = 0.5 * (lo + hi)
    return float(E[0]) if scalar else E.reshape(shape)


def true_anomaly(E, e):
    """True anomaly from the half-angle relation, in atan2 form."""
    E = np.asarray(E, dtype=float)
    e = np.asarray(e, dtype=float)
    out = 2.0 * np.arctan2(np.sqrt(1.0 + e) * np.sin(E / 2.0),
                           np.sqrt(1.0 - e) * np.cos(E / 2.0))
    return out if out.ndim else float(out)


def rv_forward(thetas, times, n_planets: int):
    """Stellar radial velocity ``(N, K)`` for parameter rows ``(N, 1 + 5S)``.

    Rows with an invalid orbit (``P <= 0`` or ``e`` outside ``[0, 1)``)
    produce NaN, which the residual computation maps to ``+inf``.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    times = np.asarray(times, dtype=float)
    if thetas.shape[1] != 1 + PARAMS_PER_PLANET * n_planets:
        raise ValueError("parameter vector length does not match the planet count")
    out = np.repeat(thetas[:, :1], times.size, axis=1)
    valid = np.all(np.isfinite(thetas), axis=1)
    for i in range(n_planets):
        e, P = thetas[:, 3 + 5 * i], thetas[:, 4 + 5 * i]
        valid &= (P > 0) & (e >= 0) & (e < 1)
    if not valid.any():
        return np.full(out.shape, np.nan)
    good = thetas[valid]
    vel = out[valid]
    for i in range(n_planets):
        A, w, e, P, tau = (good[:, 1 + 5 * i + j][:, None] for j in range(5))
        M = mean_anomaly(times[None, :], P, tau)
        E = solve_kepler(M, np.broadcast_to(e, M.shape))
        u = true_anomaly(E, e)
        vel = vel + A * (np.cos(u + w) + e * np.cos(w))
    out[valid] = vel
    out[~valid] = np.nan
    return out


def true_anomaly_rate(u, P, e, standard=True):
    """``du/dt`` for a Keplerian orbit.

    ``standard=True`` uses the textbook ``(1 - e^2)^{3/2}`` denominator;
    ``standard=False`` uses ``(1 - e)^{3/2}``, a non-standard variant kept
    for comparison.
    """
    denom = (1.0 - e ** 2) ** 1.5 if standard else (1.0 - e) ** 1.5
    return TWO_PI / P * (1.0 + e * np.cos(u)) ** 2 / denom


def default_box(n_planets: int, narrow_amplitude=False):
    """Uniform prior box. ``narrow_amplitude`` restricts A to [-20, 20]."""
    amp = 20.0 if narrow_amplitude else 30.0
    lower = [-20.0] + [-amp, 0.0, 0.0, 0.0, 0.0] * n_planets
    upper = [20.0] + [amp, TWO_PI, 1.0, 365.0, 50.0] * n_planets
    return np.array(lower), np.array(upper)


class RvModel(ObservationModel):

    def __init__(self, dataset: Dataset, n_planets: int, lower=None, upper=None,
                 narrow_amplitude=False, **kwargs):
        if n_planets < 1:
            raise ValueError("need at least one planet")
        if dataset.times is None:
            raise ValueError("radial-velocity data needs observation times")
        if lower is None or upper is None:
            lower, upper = default_box(n_planets, narrow_amplitude)
        super().__init__(dataset, BoxPrior(lower, upper), **kwargs)
        if self.dim != 1 + PARAMS_PER_PLANET * n_planets:
            raise ValueError("box dimension does not match the planet count")
        self.n_planets = n_planets

    def forward(self, thetas):
        return rv_forward(thetas, self.dataset.times, self.n_planets)


def pack_theta(V0, planets) -> np.ndarray:
    theta = [V0]
    for p in planets:
        theta += [p.A, p.omega, p.e, p.P, p.tau]
    return np.array(theta, dtype=float)


def sample_times(K, rng, span=(0.0, 400.0), n_windows=3, window=50.0):
    """Acquisition times drawn uniformly inside randomly placed windows."""
    starts = np.sort(rng.uniform(span[0], span[1] - window, n_windows))
    counts = np.full(n_windows, K // n_windows)
    counts[: K % n_windows] += 1
    times = np.concatenate([rng.uniform(s, s + window, c) for s, c in zip(starts, counts)])
    return np.sort(times)


def simulate_rv(planets=TRUE_PLANETS, V0=V0_TRUE, sigma_true=SIGMA_TRUE, K=K_DEFAULT,
                seed=0, span=(0.0, 400.0), n_windows=3, window=50.0) -> Dataset:
    rng = np.random.default_rng(seed)
    times = sample_times(K, rng, span, n_windows, window)
    clean = rv_forward(pack_theta(V0, planets)[None, :], times, len(planets))[0]
    return Dataset(clean + sigma_true * rng.standard_normal(K), times)
