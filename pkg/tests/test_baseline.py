import numpy as np
import pytest
from scipy import integrate

from atais.baseline import BaselineConfig, joint_log_weights, run_standard_ais
from atais.bench.linear import LinearModel, simulate_linear, truncated_normal_evidence
from atais.core import AtaisConfig, GaussianProposal, run_atais
from atais.model import Dataset, SigmaPrior
from atais.post import run_post


def unit_model():
    return LinearModel([[1.0]], Dataset([0.5]), [0.0], [1.0])


def exact_unit_evidence(prior):
    val, _ = integrate.quad(lambda s: truncated_normal_evidence(0.5, s) / (prior.b - prior.a),
                            prior.a, prior.b, limit=200)
    return val


class ExactPosterior:
    """Duck-typed proposal whose density is the normalised joint posterior."""

    def __init__(self, Z, prior):
        self.Z, self.prior = Z, prior

    def log_pdf(self, x):
        th, s = x[:, 0], x[:, 1]
        return (-0.5 * np.log(2 * np.pi * s ** 2) - (0.5 - th) ** 2 / (2 * s ** 2)
                - np.log(self.prior.b - self.prior.a) - np.log(self.Z))


def test_exact_proposal_gives_equal_weights():
    prior = SigmaPrior(0.0, 2.0)
    Z = exact_unit_evidence(prior)
    x = np.column_stack([np.random.default_rng(0).random(20), np.linspace(0.1, 2.0, 20)])
    lw, _ = joint_log_weights(unit_model(), prior, x, ExactPosterior(Z, prior))
    np.testing.assert_allclose(np.exp(lw), Z, rtol=1e-12)


def test_sigma_outside_support_has_zero_weight():
    q = GaussianProposal([0.5, 1.0], np.eye(2))
    x = np.array([[0.5, -0.2], [0.5, 0.0], [0.5, 2.5], [0.5, 1.0]])
    lw, _ = joint_log_weights(unit_model(), SigmaPrior(0.0, 2.0), x, q)
    assert np.all(lw[:3] == -np.inf) and np.isfinite(lw[3])


def test_linear_gaussian_evidence():
    H = np.ones((5, 1))
    m = LinearModel(H, simulate_linear(H, [1.0], 0.8, seed=4), [-20.0], [20.0])
    prior = SigmaPrior(0.0, 3.0)
    res = run_standard_ais(m, prior, BaselineConfig(N=5000, T=6, mu0=[1.0, 1.5],
                                                    cov0=[1.0, 1.0], seed=2))
    w = np.exp(res.log_w)
    se = w.std() / np.sqrt(w.size)
    assert abs(res.Z.value - m.evidence(prior)) < 4 * se
    assert res.n_forward_evals == 30_000 == m.n_forward_evals


def test_evidence_nonnegative_and_result_shapes():
    res = run_standard_ais(unit_model(), SigmaPrior(0, 2),
                           BaselineConfig(N=50, T=3, mu0=[0.5, 1.0], cov0=[1.0, 1.0], seed=0))
    assert res.Z.value >= 0
    assert res.theta.shape == (150, 1) and res.sigma.shape == (150,)
    assert len(res.proposals) == 3
    np.testing.assert_array_equal(np.bincount(res.iteration)[1:], [50, 50, 50])


def test_wrong_start_dimension():
    with pytest.raises(ValueError):
        run_standard_ais(unit_model(), SigmaPrior(0, 2),
                         BaselineConfig(N=5, T=1, mu0=[0.5], cov0=[1.0]))


def test_both_estimators_unbiased_on_truncated_normal():
    prior = SigmaPrior(0.0, 2.0)
    exact = exact_unit_evidence(prior)
    a, b = [], []
    for seed in range(100):
        m = unit_model()
        _, store = run_atais(m, AtaisConfig(N=100, T=5, sigma0=2.0, mu0=[0.5], cov0=[0.25],
                                            seed=seed))
        a.append(run_post(store, prior).Z.value)
        r = run_standard_ais(m, prior, BaselineConfig(N=100, T=5, mu0=[0.5, 1.0],
                                                      cov0=[0.25, 0.5], seed=seed))
        b.append(r.Z.value)
    a, b = np.array(a), np.array(b)
    ci = [(x.mean() - 4 * x.std() / 10, x.mean() + 4 * x.std() / 10) for x in (a, b)]
    assert ci[0][0] < ci[1][1] and ci[1][0] < ci[0][1]        # intervals overlap
    for lo, hi in ci:
        assert lo < exact < hi
