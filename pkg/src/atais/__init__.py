"""Adaptive importance sampling with automatic tempering (ATAIS).

Typical use::

    from atais import AtaisConfig, run_atais, run_post
    state, store = run_atais(model, AtaisConfig(N=1000, T=10, sigma0=20, mu0=[10], cov0=[4]))
    post = run_post(store, SigmaPrior(0, 20))
"""
__version__ = "0.1.0"

from .model import (BoxPrior, Dataset, FunctionModel, ObservationModel, SigmaPrior,  # noqa: E402
                    log_likelihood, log_tempered_posterior, residual_ss, sigma_ml_given_theta)
from .core import (AtaisConfig, GaussianProposal, ParticleStore, TemperState,  # noqa: E402
                   correct_weights, corrected_log_weights, effective_sample_size,
                   posterior_estimates, run_atais)
from .post import (EvidenceCurve, McmcConfig, global_evidence, joint_expectation,  # noqa: E402
                   marginal_posterior_sigma, noisy_mcmc_sigma, run_post, sigma_map_marg,
                   sir_resample_joint)
from .baseline import BaselineConfig, run_standard_ais  # noqa: E402
from .oracle import GridSpec, certified_oracle, grid_joint_and_marginals  # noqa: E402
