import json

import numpy as np
import pytest

from atais import io
from atais.bench.rv import simulate_rv
from atais.bench.toy import simulate_toy
from atais.baseline import BaselineConfig, run_standard_ais
from atais.core import AtaisConfig, run_atais
from atais.model import SigmaPrior
from atais.post import EvidenceCurve, run_post


@pytest.fixture
def run(toy_setup):
    return run_atais(toy_setup.model, AtaisConfig(N=50, T=4, sigma0=20.0, mu0=[10.0],
                                                  cov0=[4.0], seed=2))


def test_dataset_round_trip(tmp_path):
    for ds in (simulate_toy(seed=1), simulate_rv(seed=7)):
        p = tmp_path / "d.csv"
        io.write_dataset(p, ds, {"seed": 1})
        back = io.read_dataset(p)
        np.testing.assert_array_equal(back.y, ds.y)
        if ds.times is None:
            assert back.times is None
        else:
            np.testing.assert_array_equal(back.times, ds.times)
        assert p.read_text().splitlines()[0] == "t,y"


def test_particles_round_trip(tmp_path, run, toy_setup):
    state, store = run
    io.write_particles(tmp_path / "p.csv", store)
    header = (tmp_path / "p.csv").read_text().splitlines()[0]
    assert header == "t,n,theta_0,log_w,residual,sigma_prev"
    summary = io.run_summary(state, store, 200)
    back = io.read_particles(tmp_path / "p.csv", json.loads(json.dumps(summary, default=list)),
                             toy_setup.model.log_prior)
    for key in ("theta", "log_w", "residual", "log_q", "log_prior", "sigma_prev"):
        np.testing.assert_array_equal(getattr(back, key), getattr(store, key))
    assert back.sigma_schedule == store.sigma_schedule
    sp = SigmaPrior(0, 20)
    assert run_post(back, sp).Z.log_value == run_post(store, sp).Z.log_value


def test_summary_is_byte_stable(tmp_path, run):
    state, store = run
    for name in ("a.json", "b.json"):
        io.write_json(tmp_path / name, io.run_summary(state, store, 200, {"x": 1}))
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    d = io.read_json(tmp_path / "a.json")
    assert {"theta_map", "sigma_ml", "sigma_schedule", "n_forward_evals"} <= set(d)


def test_non_finite_json_values(tmp_path):
    io.write_json(tmp_path / "x.json", {"a": float("-inf"), "b": np.float64(2.0)})
    assert io.read_json(tmp_path / "x.json") == {"a": "-inf", "b": 2.0}


def test_post_tables(tmp_path, run):
    _, store = run
    curve = EvidenceCurve(store)
    post = run_post(store, SigmaPrior(0, 20))
    s = np.linspace(1, 10, 5)
    io.write_evidence_curve(tmp_path / "e.csv", curve, s)
    io.write_sigma_posterior(tmp_path / "s.csv", post.marginal, s)
    io.write_joint_samples(tmp_path / "j.csv", np.ones((3, 2)), [1.0, 2.0, 3.0])
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "sigma,Z_hat,log_Z_hat"
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "sigma,pdf"
    assert (tmp_path / "j.csv").read_text().splitlines()[0] == "theta_0,theta_1,sigma"
    assert len((tmp_path / "e.csv").read_text().splitlines()) == 6


def test_baseline_table(tmp_path, toy_setup):
    res = run_standard_ais(toy_setup.model, toy_setup.sigma_prior,
                           BaselineConfig(N=10, T=2, mu0=[10, 10], cov0=[4, 4]))
    io.write_baseline_particles(tmp_path / "b.csv", res)
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "t,n,theta_0,sigma,log_w,residual" and len(lines) == 21
