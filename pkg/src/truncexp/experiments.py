"""Replicated generate-fit-score sweeps.

Each cell ``(n index, replication)`` gets its own seed from
``SeedSequence(master, spawn_key=(i, rep))``, so cells are independent,
reproducible and may run in any order or in parallel.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import TruncExpError
from .loss import LossContext
from .optimizer import FitConfig, fit
from .parameter_space import tensor_norm
from .sampling import grid_exact_sampler, metropolis_sampler
from .statistics import centering_constants, problem_constants


@dataclass(frozen=True)
class SamplerConfig:
    sampler: str = "grid"
    resolution: int = 256
    burn_in: int = 1000
    thinning: int = 10
    proposal_scale: float = None
    n_chains: int = 64

    @classmethod
    def from_dict(cls, d):
        d = {k: v for k, v in d.items() if k != "n"}
        return cls(**d)


def cell_seed(master, i, rep):
    """Counter-based seed for sweep cell ``(i, rep)``."""
    return int(np.random.SeedSequence(master, spawn_key=(i, rep)).generate_state(1)[0])


def draw(family, theta, n, seed, sampler=None):
    sampler = sampler or SamplerConfig()
    if sampler.sampler == "grid":
        return grid_exact_sampler(family, family.domain, theta, sampler.resolution, n, seed)
    return metropolis_sampler(family, family.domain, theta, n, sampler.burn_in,
                              sampler.thinning, sampler.proposal_scale, seed, sampler.n_chains)


def run_replication(family, spec, truth, n, seed, fit_cfg=None, sampler=None, constants=None,
                    table=None):
    """Generate n samples from f(.; truth), fit, and return a result record."""
    S = draw(family, truth, n, seed, sampler)
    ctx = LossContext.build(family, S, table)
    res = fit(ctx, spec, fit_cfg, constants)
    return {
        "n": int(n),
        "seed": seed,
        "error": tensor_norm(res.theta - truth),
        "theta": res.theta.ravel().tolist(),
        "iterations": res.iterations,
        "stop_reason": res.certificate.stop_reason,
        "loss": res.loss,
    }


def _cell(args):
    family, spec, truth, n, i, rep, master, fit_cfg, sampler, constants, table = args
    seed = cell_seed(master, i, rep)
    try:
        out = run_replication(family, spec, truth, n, seed, fit_cfg, sampler, constants, table)
    except TruncExpError as exc:
        out = {"n": int(n), "seed": seed, "error": None, "failure": f"{type(exc).__name__}: {exc}"}
    out.update({"cell": [i, rep]})
    return out


def run_sweep(family, spec, truth, ns, replications, master_seed=0, fit_cfg=None, sampler=None,
              constants=None, workers=1):
    """Run every ``(n, replication)`` cell and summarize errors per n.

    Returns ``(records, summary)``; ``summary`` rows hold n, the number of
    successful replications and the quartiles of ``||Theta_hat - Theta*||_T``.
    Failed cells are recorded with a ``failure`` message and skipped in the
    summary.
    """
    fit_cfg = fit_cfg or FitConfig()
    truth = np.asarray(truth, dtype=float).reshape(family.shape)
    if constants is None:
        constants = problem_constants(family, spec, method=fit_cfg.bounds)
    table = centering_constants(family)
    tasks = [(family, spec, truth, n, i, rep, master_seed, fit_cfg, sampler, constants, table)
             for i, n in enumerate(ns) for rep in range(replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_cell, tasks))
    else:
        records = [_cell(t) for t in tasks]
    records.sort(key=lambda r: tuple(r["cell"]))
    return records, summarize(records, ns)


def summarize(records, ns):
    rows = []
    for n in ns:
        errs = np.array([r["error"] for r in records if r["n"] == n and r["error"] is not None])
        if errs.size:
            q1, med, q3 = np.percentile(errs, [25, 50, 75])
        else:
            q1 = med = q3 = float("nan")
        rows.append({"n": int(n), "ok": int(errs.size), "median": float(med),
                     "q1": float(q1), "q3": float(q3)})
    return rows


def loglog_slope(rows):
    """Least-squares slope of log(median error) against log(n)."""
    pts = [(r["n"], r["median"]) for r in rows if r["median"] > 0 and math.isfinite(r["median"])]
    if len(pts) < 2:
        return float("nan")
    x, y = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])
