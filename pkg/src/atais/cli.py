"""Command-line front end.

Every subcommand except ``simulate`` reads a JSON run config. Any config
field can be overridden on the command line by its dotted name, e.g.
``--algorithm.N 500 --post.sigma_prior [0,30]``; values are parsed as JSON
and fall back to plain strings.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 oracle
grid not certified.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .baseline import BaselineConfig, run_standard_ais
from .bench.linear import LinearModel, simulate_linear
from .bench.rv import (TRUE_PLANETS, V0_TRUE, KeplerSolverError, RvModel, pack_theta,
                       simulate_rv)
from .bench.toy import SIGMA_TRUE, THETA_TRUE, TOY_BOX, ToyModel, simulate_toy
from .core import (AtaisConfig, ProposalError, correct_weights, posterior_estimates,
                   run_atais)
from .model import SigmaPrior
from .oracle import GridSpec, OracleError, OracleNotCertified, certified_oracle
from .post import McmcConfig, McmcError, run_post, sir_resample_joint

log = logging.getLogger("atais")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ORACLE = 0, 2, 3, 4

DEFAULTS = {
    "model": {"kind": "toy"},
    "data": {},
    "algorithm": {"N": 1000, "T": 10, "sigma0": 20.0, "mu0": None, "cov0": None,
                  "eps": None, "seed": None},
    "post": {"sigma_prior": [0.0, 20.0], "scheme": "riemann", "R": 200, "evidence_seed": 0,
             "mcmc": {"J": 5000, "burn_in": 500, "step": 0.25, "seed": 0},
             "joint_samples": 1000, "grid": 400},
    "oracle": {"n_theta": 40001, "n_sigma": 1000, "rtol": 0.005},
    "out": None,
}

NUMERIC_ERRORS = (ProposalError, McmcError, KeplerSolverError, FloatingPointError,
                  np.linalg.LinAlgError, OracleError)


class ConfigError(Exception):
    pass


# --- configuration --------------------------------------------------------------

def _merge(base: dict, new: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in new.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(tokens) -> dict:
    """``['--a.b', '3', '--c', 'x']`` -> ``{'a': {'b': 3}, 'c': 'x'}``."""
    out: dict = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key, eq, val = tok[2:].partition("=")
        if not eq:
            try:
                val = next(it)
            except StopIteration:
                raise ConfigError(f"override {tok} needs a value") from None
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = _parse_value(val)
    return out


def load_config(path, overrides=None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            cfg = _merge(cfg, json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg


def resolve_seed(value):
    if value is not None:
        return int(value)
    env = os.environ.get("ATAIS_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"ATAIS_SEED={env!r} is not an integer") from None
    return 0


def build_dataset(cfg: dict):
    data = cfg.get("data") or {}
    if "path" in data:
        p = Path(data["path"])
        if not p.exists():
            raise ConfigError(f"dataset {p} does not exist")
        return io.read_dataset(p)
    sim = data.get("simulate")
    if sim is None:
        raise ConfigError("config needs data.path or a data.simulate block")
    return simulate_from(cfg["model"], sim)


def simulate_from(model_cfg: dict, sim: dict):
    kind = model_cfg.get("kind", "toy")
    seed = resolve_seed(sim.get("seed"))
    if kind == "toy":
        return simulate_toy(sim.get("theta_true", THETA_TRUE), sim.get("sigma_true", SIGMA_TRUE),
                            sim.get("K", 8), seed)
    if kind == "rv":
        n = int(model_cfg.get("planets", 2))
        return simulate_rv(TRUE_PLANETS[:n], sigma_true=sim.get("sigma_true", 3.0),
                           K=sim.get("K", 120), seed=seed)
    if kind == "linear":
        return simulate_linear(model_cfg["H"], sim["theta_true"], sim["sigma_true"], seed)
    raise ConfigError(f"unknown model kind {kind!r}")


def build_model(cfg: dict, dataset, workers: int = 1):
    m = cfg["model"]
    kind = m.get("kind", "toy")
    if kind == "toy":
        box = tuple(m.get("box", TOY_BOX))
        return ToyModel(dataset, box, workers=workers)
    if kind == "rv":
        return RvModel(dataset, int(m.get("planets", 2)), m.get("lower"), m.get("upper"),
                       narrow_amplitude=bool(m.get("narrow_amplitude", False)), workers=workers)
    if kind == "linear":
        return LinearModel(m["H"], dataset, m["lower"], m["upper"], m.get("offset"),
                           workers=workers)
    raise ConfigError(f"unknown model kind {kind!r}")


def default_start(cfg: dict, model):
    """Initial proposal when the config leaves ``mu0``/``cov0`` empty."""
    kind = cfg["model"].get("kind", "toy")
    if kind == "rv":
        mu = pack_theta(V0_TRUE, TRUE_PLANETS[:model.n_planets])
        return mu, np.full(mu.size, 1.0)
    if kind == "toy":
        return np.array([10.0]), np.array([4.0])
    centre = 0.5 * (model.prior.lower + model.prior.upper)
    return centre, (model.prior.sides / 5.0) ** 2


def atais_config(cfg: dict, model) -> AtaisConfig:
    a = cfg["algorithm"]
    mu0, cov0 = a.get("mu0"), a.get("cov0")
    if mu0 is None or cov0 is None:
        dmu, dcov = default_start(cfg, model)
        mu0 = dmu if mu0 is None else mu0
        cov0 = dcov if cov0 is None else cov0
    return AtaisConfig(N=int(a["N"]), T=int(a["T"]), sigma0=float(a["sigma0"]), mu0=mu0,
                       cov0=cov0, eps=a.get("eps"), seed=resolve_seed(a.get("seed")))


def sigma_prior(cfg: dict) -> SigmaPrior:
    lo, hi = cfg["post"]["sigma_prior"]
    return SigmaPrior(float(lo), float(hi))


def mcmc_config(cfg: dict):
    m = cfg["post"].get("mcmc")
    if not m:
        return None
    return McmcConfig(J=int(m["J"]), burn_in=int(m["burn_in"]), step=float(m["step"]),
                      seed=int(m.get("seed", 0)))


def output_dir(cfg: dict, required=True):
    out = cfg.get("out")
    if out is None:
        if required:
            raise ConfigError("no output directory given (--out)")
        return None
    out = Path(out)
    if not out.is_dir():
        raise ConfigError(f"output directory {out} does not exist")
    return out


def echo_config(cfg: dict, config: AtaisConfig) -> dict:
    out = copy.deepcopy(cfg)
    out["algorithm"] = {"N": config.N, "T": config.T, "sigma0": config.sigma0,
                        "mu0": config.mu0.tolist(), "cov0": config.cov0.tolist(),
                        "eps": config.eps, "seed": config.seed}
    out.pop("out", None)
    return out


# --- pipelines ------------------------------------------------------------------

def run_pipeline(cfg: dict, workers: int = 1):
    """Build everything from ``cfg``, run ATAIS and the full post-processing chain."""
    try:
        dataset = build_dataset(cfg)
        model = build_model(cfg, dataset, workers)
        config = atais_config(cfg, model)
        sp = sigma_prior(cfg)
        mc = mcmc_config(cfg)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    state, store = run_atais(model, config)
    n_evals = model.n_forward_evals
    summary = posterior_estimates(store, correct_weights(store), state)
    p = cfg["post"]
    post = run_post(store, sp, p["scheme"], int(p["R"]), p.get("evidence_seed"), mc)
    return dict(model=model, config=config, state=state, store=store, n_evals=n_evals,
                estimates=summary, post=post, sigma_prior=sp)


def write_run(out: Path, cfg: dict, res: dict):
    store, post, sp = res["store"], res["post"], res["sigma_prior"]
    grid = np.linspace(sp.a, sp.b, int(cfg["post"].get("grid", 400)) + 1)[1:]
    summary = io.run_summary(res["state"], store, res["n_evals"], echo_config(cfg, res["config"]))
    est = res["estimates"]
    summary.update(post.to_dict())
    summary.update({"posterior_mean": est.mean, "posterior_cov": est.cov, "ess": est.ess,
                    "warnings": list(est.warnings)})
    io.write_particles(out / "particles.csv", store)
    io.write_evidence_curve(out / "evidence_curve.csv", post.curve, grid)
    io.write_sigma_posterior(out / "sigma_posterior.csv", post.marginal, grid)
    if post.mcmc is not None:
        n = int(cfg["post"].get("joint_samples", 1000))
        theta, sigma = sir_resample_joint(store, post.mcmc.draws, n,
                                          seed=res["config"].seed)
        io.write_joint_samples(out / "joint_samples.csv", theta, sigma)
    io.write_json(out / "summary.json", summary)
    return summary


def compare_models(cfg_a: dict, cfg_b: dict, seeds=None, workers: int = 1) -> dict:
    """Evidence of two model configs on the same data; ``B = Z_b / Z_a``.

    With several seeds the report adds the detection rate of model B and
    the relative variance of B across seeds.
    """
    seeds = [resolve_seed(cfg_a["algorithm"].get("seed"))] if seeds is None else list(seeds)
    rows = []
    for s in seeds:
        logs = []
        for c in (cfg_a, cfg_b):
            c = _merge(c, {"algorithm": {"seed": s}, "post": {"mcmc": None}})
            logs.append(run_pipeline(c, workers)["post"].Z.log_value)
        lb = logs[1] - logs[0]
        rows.append({"seed": s, "log_Z1": logs[0], "log_Z2": logs[1], "log_B": lb,
                     "Z1": float(np.exp(logs[0])), "Z2": float(np.exp(logs[1])),
                     "B": float(np.exp(lb)), "selected": 2 if lb > 0 else 1})
    report = {"runs": rows}
    if len(rows) > 1:
        lb = np.array([r["log_B"] for r in rows])
        B = np.exp(lb - lb.max())
        report.update({"detection_rate": float(np.mean(lb > 0)),
                       "median_log_B": float(np.median(lb)),
                       "relative_variance_B": float(np.var(B) / np.mean(B) ** 2)})
    return report


# --- subcommands ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    out = Path(args.out)
    if not out.parent.is_dir():
        raise ConfigError(f"output directory {out.parent} does not exist")
    sim = {"seed": args.seed, "sigma_true": args.sigma_true}
    model_cfg = {"kind": args.model}
    if args.model == "toy":
        sim.update(theta_true=args.theta_true if args.theta_true is not None else THETA_TRUE,
                   K=args.k or 8)
        sim["sigma_true"] = SIGMA_TRUE if args.sigma_true is None else args.sigma_true
    elif args.model == "rv":
        model_cfg["planets"] = args.planets
        sim.update(K=args.k or 120)
        sim["sigma_true"] = 3.0 if args.sigma_true is None else args.sigma_true
    else:
        raise ConfigError("simulate supports --model toy or rv")
    sim["seed"] = resolve_seed(args.seed)
    dataset = simulate_from(model_cfg, sim)
    io.write_dataset(out, dataset, {"model": model_cfg, **sim})
    print(f"wrote {dataset.K} observations to {out}")
    return EXIT_OK


def cmd_run(args, cfg) -> int:
    out = output_dir(cfg)
    res = run_pipeline(cfg, args.workers)
    s = write_run(out, cfg, res)
    print(f"sigma_ml={s['sigma_ml']:.6g} log_Z_hat={s['log_Z_hat']:.6g} "
          f"forward_evals={s['n_forward_evals']} -> {out}")
    return EXIT_OK


def cmd_run_baseline(args, cfg) -> int:
    out = output_dir(cfg)
    try:
        dataset = build_dataset(cfg)
        model = build_model(cfg, dataset, args.workers)
        a = cfg["algorithm"]
        mu0, cov0 = a.get("mu0"), a.get("cov0")
        sp = sigma_prior(cfg)
        if mu0 is None or cov0 is None:
            dmu, dcov = default_start(cfg, model)
            mid = 0.5 * (sp.a + sp.b)
            mu0 = np.append(dmu, mid) if mu0 is None else mu0
            cov0 = np.append(dcov, ((sp.b - sp.a) / 5) ** 2) if cov0 is None else cov0
        config = BaselineConfig(N=int(a["N"]), T=int(a["T"]), mu0=mu0, cov0=cov0,
                                eps=a.get("eps"), seed=resolve_seed(a.get("seed")))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    res = run_standard_ais(model, sp, config)
    io.write_baseline_particles(out / "baseline_particles.csv", res)
    summary = {"Z_hat": res.Z.value, "log_Z_hat": res.Z.log_value,
               "n_forward_evals": model.n_forward_evals,
               "proposals": [q.to_dict() for q in res.proposals],
               "config": {"N": config.N, "T": config.T, "mu0": config.mu0, "cov0": config.cov0,
                          "eps": config.eps, "seed": config.seed, "model": cfg["model"]},
               "version": io.version_string()}
    io.write_json(out / "baseline_summary.json", summary)
    print(f"log_Z_hat={res.Z.log_value:.6g} -> {out}")
    return EXIT_OK


def cmd_oracle(args, cfg) -> int:
    out = output_dir(cfg)
    try:
        dataset = build_dataset(cfg)
        model = build_model(cfg, dataset)
        if model.dim != 1:
            raise ConfigError("the grid oracle needs a one-parameter model")
        sp = sigma_prior(cfg)
        grid = GridSpec((float(model.prior.lower[0]), sp.a),
                        (float(model.prior.upper[0]), sp.b),
                        (int(cfg["oracle"]["n_theta"]), int(cfg["oracle"]["n_sigma"])))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    res = certified_oracle(model, sp, grid, float(cfg["oracle"]["rtol"]))
    io.write_oracle(out, res)
    print(f"Z={res.Z:.6g} sigma_ml={res.summary['sigma_ml']:.6g} -> {out}")
    return EXIT_OK


def cmd_compare(args, cfg_a, cfg_b) -> int:
    out = output_dir(cfg_a, required=False)
    seeds = None
    if args.seeds:
        lo, _, hi = args.seeds.partition(":")
        seeds = range(int(lo), int(hi)) if hi else [int(s) for s in args.seeds.split(",")]
    report = compare_models(cfg_a, cfg_b, seeds, args.workers)
    for r in report["runs"]:
        print(f"seed {r['seed']}: log_Z1={r['log_Z1']:.4f} log_Z2={r['log_Z2']:.4f} "
              f"log_B={r['log_B']:.4f} selected=model {r['selected']}")
    if "detection_rate" in report:
        print(f"model 2 selected in {100 * report['detection_rate']:.0f}% of runs, "
              f"median log_B={report['median_log_B']:.3f}, "
              f"relative var(B)={report['relative_variance_B']:.3g}")
    if out is not None:
        io.write_json(out / "compare.json", report)
    return EXIT_OK


def cmd_post(args, cfg) -> int:
    run_dir = Path(args.run_dir)
    try:
        summary = io.read_json(run_dir / "summary.json")
    except OSError as exc:
        raise ConfigError(f"cannot read run summary: {exc}") from exc
    cfg = _merge(_merge(DEFAULTS, summary["config"]), cfg_overrides_only(cfg))
    out = Path(cfg.get("out") or run_dir)
    if not out.is_dir():
        raise ConfigError(f"output directory {out} does not exist")
    try:
        model = build_model(cfg, build_dataset(cfg))
        sp = sigma_prior(cfg)
        mc = mcmc_config(cfg)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    store = io.read_particles(run_dir / "particles.csv", summary, model.log_prior)
    p = cfg["post"]
    post = run_post(store, sp, p["scheme"], int(p["R"]), p.get("evidence_seed"), mc)
    grid = np.linspace(sp.a, sp.b, int(p.get("grid", 400)) + 1)[1:]
    io.write_evidence_curve(out / "evidence_curve.csv", post.curve, grid)
    io.write_sigma_posterior(out / "sigma_posterior.csv", post.marginal, grid)
    if post.mcmc is not None:
        theta, sigma = sir_resample_joint(store, post.mcmc.draws,
                                          int(p.get("joint_samples", 1000)),
                                          seed=int(summary["config"]["algorithm"]["seed"]))
        io.write_joint_samples(out / "joint_samples.csv", theta, sigma)
    io.write_json(out / "post_summary.json", post.to_dict())
    print(f"log_Z_hat={post.Z.log_value:.6g} sigma_map_marg={post.sigma_map_marg:.6g} -> {out}")
    return EXIT_OK


def cfg_overrides_only(cfg: dict) -> dict:
    """The parts of ``cfg`` that differ from DEFAULTS (command-line overrides)."""
    def diff(a, d):
        out = {}
        for k, v in a.items():
            if isinstance(v, dict) and isinstance(d.get(k), dict):
                sub = diff(v, d[k])
                if sub:
                    out[k] = sub
            elif k not in d or d[k] != v:
                out[k] = v
        return out
    return diff(cfg, DEFAULTS)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="atais", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic dataset (t,y CSV)")
    p.add_argument("--model", choices=["toy", "rv"], default="toy")
    p.add_argument("--theta-true", type=float)
    p.add_argument("--sigma-true", type=float)
    p.add_argument("--k", type=int, help="number of observations")
    p.add_argument("--planets", type=int, default=2)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="data.csv", help="output CSV path")

    for name, hlp in [("run", "ATAIS plus post-processing"),
                      ("run-baseline", "joint-space PMC baseline"),
                      ("oracle", "certified grid ground truth (one-parameter models)")]:
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--out", help="existing output directory")
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("compare-models", help="Bayes factor between two configs")
    p.add_argument("--config-a", required=True)
    p.add_argument("--config-b", required=True)
    p.add_argument("--seeds", help="'lo:hi' range or comma list for batch mode")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("post", help="re-run post-processing on a stored run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--config", help="optional overrides file")
    p.add_argument("--out")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args, extra = ap.parse_known_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", RuntimeWarning)
    try:
        overrides = parse_overrides(extra)
        if getattr(args, "out", None) and args.command != "simulate":
            overrides = _merge(overrides, {"out": args.out})
        if args.command == "simulate":
            if extra:
                raise ConfigError(f"unknown arguments {extra}")
            return cmd_simulate(args)
        if args.command == "compare-models":
            a = load_config(args.config_a, overrides)
            b = load_config(args.config_b, overrides)
            return cmd_compare(args, a, b)
        if args.command == "post":
            cfg = load_config(args.config, overrides) if args.config or overrides else {}
            return cmd_post(args, cfg)
        cfg = load_config(args.config, overrides)
        handler = {"run": cmd_run, "run-baseline": cmd_run_baseline, "oracle": cmd_oracle}
        return handler[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleNotCertified as exc:
        print(f"oracle not certified: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
