import numpy as np
import pytest
from scipy import integrate, stats

from atais.bench.linear import LinearModel, truncated_normal_evidence
from atais.bench.toy import ToyModel, simulate_toy
from atais.model import BoxPrior, Dataset, FunctionModel, SigmaPrior
from atais.oracle import (GridSpec, OracleError, OracleNotCertified, certified_oracle,
                          grid_conditional_posterior, grid_joint_and_marginals,
                          trapezoid_weights)


def flat_model():
    return FunctionModel(lambda th: np.zeros((th.shape[0], 3)), Dataset([0.1, -0.2, 0.3]),
                         BoxPrior([2.0], [6.0]))


class TestConditional:
    def test_flat_likelihood_is_uniform(self):
        g = grid_conditional_posterior(flat_model(), 1.0, GridSpec((2.0,), (6.0,), (401,), False))
        np.testing.assert_allclose(g.density, 0.25, rtol=1e-12)
        assert g.mean == pytest.approx(4.0)

    def test_truncated_normal_moments(self):
        m = LinearModel([[1.0]], Dataset([0.3]), [0.0], [1.0])
        s = 0.4
        g = grid_conditional_posterior(m, s, GridSpec((0.0,), (1.0,), (20_001,), False))
        tn = stats.truncnorm((0 - 0.3) / s, (1 - 0.3) / s, loc=0.3, scale=s)
        assert g.mean == pytest.approx(tn.mean(), rel=1e-7)
        assert g.var == pytest.approx(tn.var(), rel=1e-6)

    def test_toy_multimodal_at_true_sigma(self):
        m = ToyModel(simulate_toy(seed=1))
        g = grid_conditional_posterior(m, 4.0, GridSpec((0.0,), (20.0,), (20_000,)))
        p = g.density
        peaks = np.flatnonzero((p[1:-1] > p[:-2]) & (p[1:-1] > p[2:]) & (p[1:-1] > 1e-3 * p.max()))
        assert peaks.size >= 3

    def test_rejects_multidimensional(self):
        m = LinearModel(np.eye(2), Dataset([0.0, 0.0]), [0, 0], [1, 1])
        with pytest.raises(OracleError):
            grid_conditional_posterior(m, 1.0, GridSpec((0, 0), (1, 1), (10, 10)))


class TestJoint:
    def test_factorised_gaussian_evidence(self):
        # the theta integral is closed form for each sigma, leaving a 1-D quadrature
        m = LinearModel([[1.0]], Dataset([0.4]), [0.0], [1.0])
        sp = SigmaPrior(0.0, 2.0)
        res = grid_joint_and_marginals(m, sp, GridSpec((0.0, 0.0), (1.0, 2.0), (2000, 2000)))
        exact, _ = integrate.quad(lambda s: truncated_normal_evidence(0.4, s) / 2.0, 0, 2,
                                  limit=200)
        assert res.Z == pytest.approx(exact, rel=2e-3)

    def test_marginals_normalised(self, toy_setup):
        res = grid_joint_and_marginals(toy_setup.model, toy_setup.sigma_prior,
                                       GridSpec((0.0, 0.0), (20.0, 20.0), (800, 800)))
        assert np.sum(trapezoid_weights(res.theta) * res.marg_theta) == pytest.approx(1.0)
        assert np.sum(trapezoid_weights(res.sigma) * res.marg_sigma) == pytest.approx(1.0)

    def test_sigma_marginal_is_mixture_of_conditionals(self, toy_setup):
        # p(sigma | y) ∝ g(sigma) * integral over theta; check against per-sigma recomputation
        grid = GridSpec((0.0, 0.0), (20.0, 20.0), (1000, 200))
        res = grid_joint_and_marginals(toy_setup.model, toy_setup.sigma_prior, grid)
        V = toy_setup.model.residuals(res.theta[:, None])
        wt = trapezoid_weights(res.theta)
        j = 40
        s = res.sigma[j]
        with np.errstate(over="ignore"):
            direct = np.sum(wt * np.exp(-V / (2 * s * s))) * s ** -8
        j2 = 90
        s2 = res.sigma[j2]
        direct2 = np.sum(wt * np.exp(-V / (2 * s2 * s2))) * s2 ** -8
        assert res.marg_sigma[j] / res.marg_sigma[j2] == pytest.approx(direct / direct2, rel=1e-9)

    def test_toy_certified(self, toy_setup):
        s = toy_setup.truth
        assert s["certified"] and s["refinement_change"] < 0.005
        for key in ("Z", "theta_map", "sigma_ml", "cond_ml_mean", "cond_ml_var", "sigma_mean",
                    "sigma_var", "sigma_map_marg", "theta_mean", "theta_var"):
            assert np.isfinite(s[key])
        assert 0 < s["Z"] < 1
        assert s["sigma_map_joint"] == s["sigma_ml"]

    def test_refuses_coarse_grid(self, toy_setup):
        with pytest.raises(OracleNotCertified):
            certified_oracle(toy_setup.model, toy_setup.sigma_prior,
                             GridSpec((0.0, 0.0), (20.0, 20.0), (40, 40)))

    def test_grid_spec_validation(self):
        with pytest.raises(ValueError):
            GridSpec((0.0,), (1.0,), (1,))
        with pytest.raises(ValueError):
            GridSpec((1.0,), (0.0,), (10,))
        assert GridSpec((0.0,), (1.0,), (4,)).axis(0)[0] == pytest.approx(0.25)
