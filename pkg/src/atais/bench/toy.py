"""Scalar multimodal benchmark: ``f(theta) = theta^2 + log|sin(10 theta)|``."""
from __future__ import annotations

import numpy as np

from ..model import BoxPrior, Dataset, ObservationModel

# floating-point images of k*pi/10 give |sin| ~ 1e-16..1e-13 instead of 0
_SINGULAR_TOL = 1e-12

TOY_BOX = (0.0, 20.0)
THETA_TRUE = 2.5
SIGMA_TRUE = 4.0
K_DEFAULT = 8


def toy_forward(theta):
    """Noiseless toy response; ``-inf`` where ``sin(10 theta)`` vanishes."""
    theta = np.asarray(theta, dtype=float)
    s = np.abs(np.sin(10.0 * theta))
    with np.errstate(divide="ignore"):
        out = theta ** 2 + np.log(s)
    out = np.where(s < _SINGULAR_TOL, -np.inf, out)
    return out if out.ndim else float(out)


class ToyModel(ObservationModel):
    """K replicated noisy observations of ``toy_forward(theta)``, theta in (0, 20]."""

    def __init__(self, dataset: Dataset, box=TOY_BOX, **kwargs):
        super().__init__(dataset, BoxPrior([box[0]], [box[1]]), **kwargs)

    def forward(self, thetas):
        fv = toy_forward(np.asarray(thetas, dtype=float)[:, 0])
        return np.repeat(fv[:, None], self.K, axis=1)


def simulate_toy(theta_true=THETA_TRUE, sigma_true=SIGMA_TRUE, K=K_DEFAULT, seed=0) -> Dataset:
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(K)
    return Dataset(toy_forward(theta_true) + sigma_true * noise)
