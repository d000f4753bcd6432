"""Plain-text artifacts: CSV tables and sorted-key JSON summaries.

Floats are written with ``repr`` so that every value round-trips exactly;
this lets ``read_particles`` rebuild proposal densities bit for bit.
Nothing here writes a timestamp, so reruns produce identical files.
"""
from __future__ import annotations

import csv
import json
import subprocess
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .core import GaussianProposal, ParticleStore, TemperState
from .model import Dataset


def _fmt(x) -> str:
    return repr(float(x))


def _write_rows(path, header, columns):
    columns = [np.asarray(c) for c in columns]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row])


def _read_table(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [row for row in r if row]
    return header, rows


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan; keep them readable as strings
        return x if np.isfinite(x) else repr(x)
    return obj


def version_string() -> str:
    """Package version plus ``git describe`` output when run from a checkout."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5)
        tag = out.stdout.strip() if out.returncode == 0 else ""
    except (OSError, subprocess.SubprocessError):
        tag = ""
    return f"{__version__}+{tag}" if tag else __version__


# --- datasets -----------------------------------------------------------------

def write_dataset(path, dataset: Dataset, config: Optional[dict] = None):
    """``t,y`` CSV plus a JSON sidecar (same stem) echoing the simulation config.

    Without acquisition times the ``t`` column holds the observation index.
    """
    path = Path(path)
    t = dataset.times if dataset.times is not None else np.arange(dataset.K, dtype=float)
    _write_rows(path, ["t", "y"], [t.astype(float), dataset.y])
    meta = {"has_times": dataset.times is not None, "K": dataset.K,
            "simulation": config or {}, "version": __version__}
    write_json(path.with_suffix(".json"), meta)


def read_dataset(path) -> Dataset:
    path = Path(path)
    header, rows = _read_table(path)
    if header[:2] != ["t", "y"]:
        raise ValueError(f"{path}: expected columns t,y")
    arr = np.array(rows, dtype=float).reshape(-1, 2)
    sidecar = path.with_suffix(".json")
    has_times = read_json(sidecar).get("has_times", True) if sidecar.exists() else True
    return Dataset(arr[:, 1], arr[:, 0] if has_times else None)


# --- ATAIS particles and summary ----------------------------------------------

def particle_header(dim: int, extra=()) -> list:
    return ["t", "n"] + [f"theta_{i}" for i in range(dim)] + list(extra)


def write_particles(path, store: ParticleStore):
    cols = [store.iteration, store.index] + [store.theta[:, i] for i in range(store.dim)]
    cols += [store.log_w, store.residual, store.sigma_prev]
    _write_rows(path, particle_header(store.dim, ("log_w", "residual", "sigma_prev")), cols)


def run_summary(state: TemperState, store: ParticleStore, n_forward_evals: int,
                config: Optional[dict] = None) -> dict:
    return {
        "theta_map": state.theta_map,
        "sigma_ml": state.sigma_ml,
        "sigma_schedule": list(store.sigma_schedule),
        "n_forward_evals": int(n_forward_evals),
        "K": store.K,
        "proposals": [q.to_dict() for q in store.proposals],
        "config": config or {},
        "version": version_string(),
    }


def read_particles(path, summary: dict, log_prior: Callable[[np.ndarray], np.ndarray]
                   ) -> ParticleStore:
    """Rebuild a ParticleStore from its CSV and the run summary.

    ``log q`` is recomputed from the stored proposals and ``log g`` from
    ``log_prior``; neither touches the forward map.
    """
    header, rows = _read_table(path)
    dim = sum(h.startswith("theta_") for h in header)
    if header != particle_header(dim, ("log_w", "residual", "sigma_prev")):
        raise ValueError(f"{path}: unexpected particle columns")
    arr = np.array(rows, dtype=float).reshape(-1, len(header))
    t = arr[:, 0].astype(int)
    proposals = [GaussianProposal.from_dict(d) for d in summary["proposals"]]
    schedule = [float(s) for s in summary["sigma_schedule"]]
    store = ParticleStore(int(summary["K"]), dim, schedule[0])
    for it in range(1, len(proposals) + 1):
        sel = t == it
        theta = arr[sel, 2:2 + dim]
        q = proposals[it - 1]
        sig = arr[sel, -1]
        store.append(theta, arr[sel, -3], arr[sel, -2], q.log_pdf(theta), log_prior(theta),
                     sig[0] if sig.size else schedule[it - 1], q)
    store.sigma_schedule[:] = schedule
    return store


# --- post-processing tables ------------------------------------------------------

def write_evidence_curve(path, curve, sigmas):
    sigmas = np.asarray(sigmas, dtype=float)
    lz = curve.log_value(sigmas)
    _write_rows(path, ["sigma", "Z_hat", "log_Z_hat"], [sigmas, np.exp(lz), lz])


def write_sigma_posterior(path, marginal, sigmas):
    sigmas = np.asarray(sigmas, dtype=float)
    _write_rows(path, ["sigma", "pdf"], [sigmas, marginal(sigmas)])


def write_joint_samples(path, theta, sigma):
    theta = np.atleast_2d(theta)
    cols = [theta[:, i] for i in range(theta.shape[1])] + [np.asarray(sigma, dtype=float)]
    _write_rows(path, [f"theta_{i}" for i in range(theta.shape[1])] + ["sigma"], cols)


# --- baseline and oracle -----------------------------------------------------------

def write_baseline_particles(path, result):
    dim = result.theta.shape[1]
    n = result.iteration.size
    index = np.concatenate([np.arange(c) for c in np.bincount(result.iteration)[1:]]) if n else []
    cols = [result.iteration, index] + [result.theta[:, i] for i in range(dim)]
    cols += [result.sigma, result.log_w, result.residual]
    _write_rows(path, particle_header(dim, ("sigma", "log_w", "residual")), cols)


def write_oracle(outdir, result):
    """``oracle_summary.json`` plus the marginal density tables."""
    outdir = Path(outdir)
    write_json(outdir / "oracle_summary.json", result.summary)
    _write_rows(outdir / "oracle_marg_theta.csv", ["theta", "pdf"],
                [result.theta, result.marg_theta])
    _write_rows(outdir / "oracle_marg_sigma.csv", ["sigma", "pdf"],
                [result.sigma, result.marg_sigma])
    c = result.conditional_ml
    _write_rows(outdir / "oracle_cond_theta.csv", ["theta", "pdf"], [c.theta, c.density])
