import json

import numpy as np
import pytest
from scipy import integrate, stats

from atais import cli, io
from atais.bench.toy import ToyModel, simulate_toy
from atais.core import AtaisConfig, run_atais
from atais.model import BoxPrior, FunctionModel, SigmaPrior
from atais.post import run_post


def write_cfg(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture
def toy_cfg(tmp_path):
    return write_cfg(tmp_path / "toy.json", {
        "model": {"kind": "toy"},
        "data": {"simulate": {"seed": 1}},
        "algorithm": {"N": 1000, "T": 10, "sigma0": 20, "mu0": [10], "cov0": [4], "seed": 3},
        "post": {"mcmc": {"J": 500, "burn_in": 50, "step": 0.25, "seed": 0},
                 "joint_samples": 100},
    })


class TestSimulate:
    def test_toy(self, tmp_path):
        out = tmp_path / "toy.csv"
        assert cli.main(["simulate", "--model", "toy", "--theta-true", "2.5", "--sigma-true", "4",
                         "--k", "8", "--seed", "1", "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 9
        np.testing.assert_array_equal(io.read_dataset(out).y, simulate_toy(seed=1).y)

    def test_rv(self, tmp_path):
        out = tmp_path / "rv.csv"
        assert cli.main(["simulate", "--model", "rv", "--planets", "2", "--seed", "7",
                         "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 121
        meta = json.loads(out.with_suffix(".json").read_text())
        assert meta["simulation"]["seed"] == 7 and meta["has_times"]

    def test_missing_directory(self, tmp_path):
        out = tmp_path / "nope" / "d.csv"
        assert cli.main(["simulate", "--out", str(out)]) == 2
        assert not (tmp_path / "nope").exists()
        assert list(tmp_path.iterdir()) == []

    def test_seed_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ATAIS_SEED", "5")
        out = tmp_path / "d.csv"
        cli.main(["simulate", "--out", str(out)])
        np.testing.assert_array_equal(io.read_dataset(out).y, simulate_toy(seed=5).y)


class TestRun:
    def test_artifacts(self, tmp_path, toy_cfg):
        out = tmp_path / "run"
        out.mkdir()
        assert cli.main(["run", "--config", toy_cfg, "--out", str(out)]) == 0
        s = json.loads((out / "summary.json").read_text())
        sched = s["sigma_schedule"]
        assert len(sched) == 11 and all(b <= a for a, b in zip(sched, sched[1:]))
        assert s["n_forward_evals"] == 10_000
        for key in ("Z_hat", "log_Z_hat", "sigma_map_marg", "sigma_mean", "sigma_var",
                    "theta_map", "sigma_ml", "version", "config"):
            assert key in s
        for name in ("particles.csv", "evidence_curve.csv", "sigma_posterior.csv",
                     "joint_samples.csv"):
            assert (out / name).exists()
        assert len((out / "particles.csv").read_text().splitlines()) == 10_001

    def test_byte_identical_and_worker_invariant(self, tmp_path, toy_cfg):
        dirs = []
        for i, workers in enumerate(("1", "1", "3")):
            d = tmp_path / f"r{i}"
            d.mkdir()
            assert cli.main(["run", "--config", toy_cfg, "--out", str(d), "--workers", workers,
                             "--algorithm.N", "200"]) == 0
            dirs.append(d)
        ref = (dirs[0] / "summary.json").read_bytes()
        for d in dirs[1:]:
            assert (d / "summary.json").read_bytes() == ref
            assert (d / "particles.csv").read_bytes() == (dirs[0] / "particles.csv").read_bytes()

    def test_dotted_override(self, tmp_path, toy_cfg):
        out = tmp_path / "o"
        out.mkdir()
        cli.main(["run", "--config", toy_cfg, "--out", str(out), "--algorithm.T", "3",
                  "--algorithm.N=20", "--post.mcmc", "null"])
        s = json.loads((out / "summary.json").read_text())
        assert len(s["sigma_schedule"]) == 4 and s["n_forward_evals"] == 60
        assert not (out / "joint_samples.csv").exists()

    def test_missing_output_dir(self, tmp_path, toy_cfg):
        assert cli.main(["run", "--config", toy_cfg, "--out", str(tmp_path / "none")]) == 2

    def test_bad_config_value(self, tmp_path, toy_cfg):
        out = tmp_path / "o"
        out.mkdir()
        assert cli.main(["run", "--config", toy_cfg, "--out", str(out),
                         "--algorithm.N", "0"]) == 2
        assert list(out.iterdir()) == []

    def test_numerical_failure(self, tmp_path, toy_cfg):
        out = tmp_path / "o"
        out.mkdir()
        rc = cli.main(["run", "--config", toy_cfg, "--out", str(out),
                       "--algorithm.cov0", "[[-1.0]]"])
        assert rc == 3

    def test_post_rerun(self, tmp_path, toy_cfg):
        out = tmp_path / "run"
        out.mkdir()
        cli.main(["run", "--config", toy_cfg, "--out", str(out), "--algorithm.N", "300"])
        first = json.loads((out / "summary.json").read_text())
        again = tmp_path / "again"
        again.mkdir()
        assert cli.main(["post", "--run-dir", str(out), "--out", str(again)]) == 0
        second = json.loads((again / "post_summary.json").read_text())
        assert second["log_Z_hat"] == first["log_Z_hat"]
        assert second["sigma_map_marg"] == first["sigma_map_marg"]

    def test_baseline(self, tmp_path, toy_cfg):
        out = tmp_path / "b"
        out.mkdir()
        assert cli.main(["run-baseline", "--config", toy_cfg, "--out", str(out),
                         "--algorithm.mu0", "[10, 10]", "--algorithm.cov0", "[4, 4]",
                         "--algorithm.N", "100"]) == 0
        s = json.loads((out / "baseline_summary.json").read_text())
        assert s["n_forward_evals"] == 1000 and s["Z_hat"] >= 0


class TestOracle:
    def test_toy(self, tmp_path, toy_cfg, toy_setup):
        out = tmp_path / "o"
        out.mkdir()
        assert cli.main(["oracle", "--config", toy_cfg, "--out", str(out)]) == 0
        s = json.loads((out / "oracle_summary.json").read_text())
        assert s["Z"] == pytest.approx(toy_setup.truth["Z"], rel=1e-12)
        assert s["certified"] is True
        assert (out / "oracle_marg_sigma.csv").exists()

    def test_not_certified(self, tmp_path, toy_cfg):
        out = tmp_path / "o"
        out.mkdir()
        assert cli.main(["oracle", "--config", toy_cfg, "--out", str(out),
                         "--oracle.n_theta", "200", "--oracle.n_sigma", "30"]) == 4

    def test_flat_likelihood(self, tmp_path):
        cfg = write_cfg(tmp_path / "flat.json", {
            "model": {"kind": "linear", "H": [[0.0], [0.0]], "lower": [1.0], "upper": [3.0]},
            "data": {"simulate": {"theta_true": [2.0], "sigma_true": 1.0, "seed": 0}},
            "post": {"sigma_prior": [0, 5]}, "oracle": {"n_theta": 401, "n_sigma": 400}})
        out = tmp_path / "o"
        out.mkdir()
        assert cli.main(["oracle", "--config", cfg, "--out", str(out)]) == 0
        s = json.loads((out / "oracle_summary.json").read_text())
        assert s["theta_mean"] == pytest.approx(2.0, abs=1e-12)
        assert s["theta_var"] == pytest.approx(4 / 12, rel=1e-4)

    def test_analytic_gaussian(self, tmp_path):
        # f(theta) = theta, two data, uniform theta on [0, 1]: Z(sigma) has a closed form
        y = np.array([0.3, 0.8])
        ds = tmp_path / "d.csv"
        ds.write_text("t,y\n0.0,0.3\n1.0,0.8\n")
        cfg = write_cfg(tmp_path / "g.json", {
            "model": {"kind": "linear", "H": [[1.0], [1.0]], "lower": [0.0], "upper": [1.0]},
            "data": {"path": str(ds)}, "post": {"sigma_prior": [0, 2]},
            "oracle": {"n_theta": 2001, "n_sigma": 2000}})
        out = tmp_path / "o"
        out.mkdir()
        assert cli.main(["oracle", "--config", cfg, "--out", str(out)]) == 0
        s = json.loads((out / "oracle_summary.json").read_text())

        ybar, ss = y.mean(), np.sum((y - y.mean()) ** 2)

        def z_sigma(sig):
            r = sig / np.sqrt(2)
            mass = stats.norm.cdf((1 - ybar) / r) - stats.norm.cdf(-ybar / r)
            return np.exp(-ss / (2 * sig ** 2)) / (2 * np.pi * sig ** 2) * np.sqrt(np.pi) * sig * mass

        exact, _ = integrate.quad(lambda v: z_sigma(v) / 2, 0, 2, limit=200)
        assert s["Z"] == pytest.approx(exact, rel=1e-4)
        assert s["sigma_ml"] == pytest.approx(np.sqrt(ss / 2), rel=1e-9)
        assert s["theta_map"] == pytest.approx(ybar, abs=1e-9)


class TestCompare:
    def test_identical_models(self, tmp_path, toy_cfg, capsys):
        assert cli.main(["compare-models", "--config-a", toy_cfg, "--config-b", toy_cfg,
                         "--algorithm.N", "100"]) == 0
        assert "log_B=0.0000" in capsys.readouterr().out

    def test_batch_report(self, tmp_path, toy_cfg):
        out = tmp_path / "c"
        out.mkdir()
        assert cli.main(["compare-models", "--config-a", toy_cfg, "--config-b", toy_cfg,
                         "--algorithm.N", "50", "--seeds", "0:3", "--out", str(out)]) == 0
        rep = json.loads((out / "compare.json").read_text())
        assert len(rep["runs"]) == 3 and rep["relative_variance_B"] == 0.0
        assert all(r["B"] == 1.0 for r in rep["runs"])

    def test_wrong_forward_map_loses(self):
        ds = simulate_toy(sigma_true=0.5, seed=2)
        right = ToyModel(ds)
        # range [10, 14] never reaches the data level near 4.2
        wrong = FunctionModel(lambda th: np.repeat(10.0 + th ** 2 / 100, 8, axis=1), ds,
                              BoxPrior([0.0], [20.0]))
        cfg = AtaisConfig(N=1000, T=10, sigma0=20.0, mu0=[10.0], cov0=[4.0], seed=0)
        logs = [run_post(run_atais(m, cfg)[1], SigmaPrior(0, 20)).Z.log_value
                for m in (right, wrong)]
        assert logs[0] - logs[1] > 2

    def test_unknown_override_syntax(self, toy_cfg):
        assert cli.main(["run", "--config", toy_cfg, "stray"]) == 2
