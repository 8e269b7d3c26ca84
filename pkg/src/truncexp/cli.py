"""Command-line front end: ``truncexp {sample,fit,diagnose,experiment} CONFIG``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 capacity guard, 1 any other library error.
"""

import argparse
import csv
import json
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .config import SCHEMA_VERSION, config_hash, load_config, load_truth
from .errors import (AccuracyError, AssumptionViolation, CapacityError, NumericalError,
                     SchemaError, TruncExpError)
from .experiments import SamplerConfig, cell_seed, draw, loglog_slope, run_sweep
from .loss import LossContext, population_loss_batch
from .optimizer import FitConfig, fit
from .parameter_space import ConstraintSpec
from .sampling import SampleSet
from .statistics import ProblemConstants, StatisticFamily, problem_constants

EXIT_OK, EXIT_OTHER, EXIT_SCHEMA, EXIT_NUMERICAL, EXIT_CAPACITY = 0, 1, 2, 3, 4
QUADRATURE_MAX_DIM = 3
CONCENTRATION_MAX_DIM = 2


# -- problem assembly --------------------------------------------------------

class Problem:
    """Family, constraints, truth and fit settings assembled from a config."""

    def __init__(self, cfg):
        self.cfg = cfg
        fam = dict(cfg["family"])
        fam["domain"] = cfg["domain"]
        try:
            self.family = StatisticFamily.from_dict(fam)
        except (ValueError, TruncExpError) as exc:
            if isinstance(exc, CapacityError):
                raise
            raise SchemaError(str(exc), "/family") from exc
        self.spec = ConstraintSpec.from_list(cfg["constraints"])
        if len(self.spec) != self.family.shape[2]:
            raise SchemaError(f"{len(self.spec)} constraints for k3={self.family.shape[2]}",
                              "/constraints")
        self.truth = load_truth(cfg, self.family.shape)
        f = dict(cfg.get("fit", {}))
        phi_max, d = f.pop("phi_max", None), f.pop("d", None)
        self.fit_cfg = FitConfig(**f)
        if phi_max is not None or d is not None:
            auto = None
            if phi_max is None or d is None:
                auto = problem_constants(self.family, self.spec, method=self.fit_cfg.bounds)
            self.constants = ProblemConstants(
                float(phi_max if phi_max is not None else auto.phi_max),
                tuple(d if d is not None else auto.d))
        else:
            self.constants = None
        self.hash = config_hash(cfg)

    @property
    def truth_or_zero(self):
        return self.truth if self.truth is not None else np.zeros(self.family.shape)

    def sampler(self):
        gen = dict(self.cfg["samples"]["generate"])
        return gen["n"], SamplerConfig.from_dict(gen)

    def samples(self):
        src = self.cfg.get("samples")
        if src is None:
            raise SchemaError("no sample source", "/samples")
        if "file" in src:
            return SampleSet.read(src["file"], self.family.domain)
        n, sc = self.sampler()
        return draw(self.family, self.truth_or_zero, n, cell_seed(self.cfg["seed"], 0, 0), sc)

    def header(self, command):
        return {"schema_version": SCHEMA_VERSION, "config_hash": self.hash, "command": command}


def _outdir(cfg):
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- subcommands ------------------------------------------------------------

def cmd_sample(cfg):
    prob = Problem(cfg)
    if "generate" not in cfg.get("samples", {}):
        raise SchemaError("sample needs a 'generate' source", "/samples")
    S = prob.samples()
    prov = dict(S.provenance, config_hash=prob.hash, master_seed=cfg["seed"],
                seed_split={"spawn_key": [0, 0]})
    S = SampleSet(S.data, S.domain, prov)
    path = S.write(_outdir(cfg) / "samples.csv")
    return {"samples": str(path), "n": S.n}


def _fit_document(prob, res):
    doc = prob.header("fit")
    doc.update(res.to_dict())
    doc.pop("timings", None)
    if prob.truth is not None:
        doc["error_to_truth"] = float(np.linalg.norm(res.theta - prob.truth))
    return doc


def cmd_fit(cfg):
    prob = Problem(cfg)
    S = prob.samples()
    ctx = LossContext.build(prob.family, S)
    res = fit(ctx, prob.spec, prob.fit_cfg, prob.constants)
    out = _outdir(cfg)
    doc = _fit_document(prob, res)
    _write_json(out / "fit_result.json", doc)
    with open(out / "loss_trace.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "loss", "grad_map_norm"])
        for p in res.trace:
            w.writerow([p.iteration, repr(p.loss), repr(p.grad_map_norm)])
    summary = {"theta": doc["theta"], "iterations": res.iterations,
               "stop_reason": res.certificate.stop_reason, "seconds": res.timings["loop_s"]}
    if "error_to_truth" in doc:
        summary["error_to_truth"] = doc["error_to_truth"]
    return summary


def _skipped(reason="dimension"):
    return {"status": f"skipped: {reason}"}


def _kl_grid(prob, theta_ref, grid_cfg):
    fam = prob.family
    lo, hi, step = grid_cfg.get("lo", -3.0), grid_cfg.get("hi", 3.0), grid_cfg.get("step", 1e-3)
    grid = lo + step * np.arange(int(round((hi - lo) / step)) + 1)
    thetas = grid[:, None] * np.ones(fam.size)
    kl = dg.kl_uniform_vs_shifted_batch(fam, None, theta_ref, thetas)
    pl = population_loss_batch(fam, theta_ref, thetas)
    return {
        "status": "ok",
        "kl_at_reference": dg.kl_uniform_vs_shifted(fam, None, theta_ref, theta_ref),
        "argmin_kl": float(grid[np.argmin(kl)]),
        "argmin_population_loss": float(grid[np.argmin(pl)]),
        "grid": {"lo": lo, "hi": hi, "step": step},
    }


def cmd_diagnose(cfg):
    prob = Problem(cfg)
    dcfg = cfg.get("diagnose", {})
    checks = dcfg.get("checks", ["correlation", "population_correlation", "kl", "sandwich",
                                 "concentration", "finite_sample"])
    fam = prob.family
    p = fam.dim
    S = prob.samples()
    ctx = LossContext.build(fam, S)
    if prob.truth is not None:
        theta_ref, ref_kind = prob.truth, "truth"
    else:
        theta_ref, ref_kind = fit(ctx, prob.spec, prob.fit_cfg, prob.constants).theta, "fit"
    report = prob.header("diagnose")
    report["reference"] = {"kind": ref_kind, "theta": theta_ref.ravel().tolist()}
    sections = {}
    emp = None
    if "correlation" in checks or "finite_sample" in checks:
        emp = dg.empirical_correlation(ctx)
    if "correlation" in checks:
        sections["correlation"] = {"status": "ok", "n": emp.n, "lambda_min": emp.lambda_min,
                                   "H": emp.H.tolist()}
    if "population_correlation" in checks:
        if p > QUADRATURE_MAX_DIM:
            sections["population_correlation"] = _skipped()
        else:
            pop = dg.population_correlation(fam, None, theta_ref)
            sections["population_correlation"] = {
                "status": "ok", "lambda_min": pop.lambda_min,
                "assumption_positive_eigenvalue": pop.positive_definite}
    if "kl" in checks:
        if p != 1 or fam.size != 1:
            sections["kl"] = _skipped()
        else:
            sections["kl"] = _kl_grid(prob, theta_ref, dcfg.get("kl_grid", {}))
    if "sandwich" in checks:
        if p > QUADRATURE_MAX_DIM:
            sections["sandwich"] = _skipped()
        else:
            try:
                sw = dg.sandwich_covariance(fam, None, theta_ref)
                sections["sandwich"] = {"status": "ok", "sigma": sw.sigma.tolist(),
                                        "condition_number": sw.condition_number}
            except AssumptionViolation as exc:
                sections["sandwich"] = {"status": f"failed: {exc}"}
    if "concentration" in checks:
        if p > CONCENTRATION_MAX_DIM:
            sections["concentration"] = _skipped()
        else:
            cc = dcfg.get("concentration", {})
            n, trials, delta = cc.get("n", 10_000), cc.get("trials", 20), cc.get("delta", 0.05)
            rc = dg.concentration_check_correlation(fam, None, theta_ref, n, trials, delta,
                                                    seed=cfg["seed"])
            rg = dg.concentration_check_gradient(fam, None, theta_ref, n, trials, prob.spec,
                                                 delta, prob.constants, seed=cfg["seed"])
            sections["concentration"] = {"status": "ok", "correlation": rc.to_dict(),
                                         "gradient": rg.to_dict()}
    if "finite_sample" in checks:
        consts = prob.constants or problem_constants(fam, prob.spec,
                                                     method=prob.fit_cfg.bounds)
        lam = max(emp.lambda_min, 1e-6)
        b = dg.finite_sample_n(fam.shape, dcfg.get("alpha", 0.5), dcfg.get("delta", 0.1), lam,
                               consts.phi_max, prob.spec.radii, consts.d)
        sections["finite_sample"] = dict(b.to_dict(), status="ok", lambda_min_plugin=lam)
    report["checks"] = sections
    _write_json(_outdir(cfg) / "diagnose.json", report)
    return _render(sections)


def _render(sections):
    rows = {}
    for name, sec in sections.items():
        status = sec.get("status", "ok")
        scalars = {k: v for k, v in sec.items()
                   if k != "status" and isinstance(v, (int, float, bool))}
        rows[name] = status if not scalars else status + "  " + "  ".join(
            f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in scalars.items())
    return rows


def cmd_experiment(cfg):
    prob = Problem(cfg)
    sweep = cfg.get("sweep")
    if not sweep or not sweep.get("n"):
        raise SchemaError("experiment needs a non-empty sweep.n axis", "/sweep/n")
    if prob.truth is None:
        raise SchemaError("experiment needs a truth tensor", "/truth")
    gen = dict(cfg.get("samples", {}).get("generate", {"n": 1}))
    sampler = SamplerConfig.from_dict(gen)
    records, rows = run_sweep(prob.family, prob.spec, prob.truth, sweep["n"],
                              sweep.get("replications", 10), cfg["seed"], prob.fit_cfg,
                              sampler, prob.constants, sweep.get("workers", 1))
    out = _outdir(cfg)
    with open(out / "experiment_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "ok", "median_error", "q1_error", "q3_error"])
        for r in rows:
            w.writerow([r["n"], r["ok"], repr(r["median"]), repr(r["q1"]), repr(r["q3"])])
    doc = prob.header("experiment")
    doc.update({"summary": rows, "loglog_slope": loglog_slope(rows), "replications": records,
                "seed_split": "SeedSequence(master_seed, spawn_key=(n_index, replication))"})
    if sweep.get("alpha"):
        consts = prob.constants or problem_constants(prob.family, prob.spec,
                                                     method=prob.fit_cfg.bounds)
        lam = max(dg.population_correlation(prob.family, None, prob.truth).lambda_min, 1e-6) \
            if prob.family.dim <= QUADRATURE_MAX_DIM else 1e-6
        doc["alpha_bounds"] = [
            dict(dg.finite_sample_n(prob.family.shape, a, 0.1, lam, consts.phi_max,
                                    prob.spec.radii, consts.d).to_dict(), alpha=a)
            for a in sweep["alpha"]]
    _write_json(out / "experiment.json", doc)
    return {r["n"]: f"median={r['median']:.4g} ok={r['ok']}" for r in rows} | {
        "loglog_slope": doc["loglog_slope"]}


COMMANDS = {"sample": cmd_sample, "fit": cmd_fit, "diagnose": cmd_diagnose,
            "experiment": cmd_experiment}


# -- entry point ------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="truncexp", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="experiment config JSON")
        sp.add_argument("--output-dir")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--max-iters", type=int)
        sp.add_argument("--step-size", type=float)
        sp.add_argument("--trace-stride", type=int)
    return ap


_OVERRIDES = {"output_dir": "output_dir", "seed": "seed", "epsilon": "fit.epsilon",
              "max_iters": "fit.max_iters", "step_size": "fit.step_size",
              "trace_stride": "fit.trace_stride"}


def _where(exc):
    tb = traceback.extract_tb(exc.__traceback__)
    return Path(tb[-1].filename).stem if tb else "?"


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {key: getattr(args, a) for a, key in _OVERRIDES.items()
                 if getattr(args, a) is not None}
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config, overrides)
        result = COMMANDS[args.command](cfg)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except CapacityError as exc:
        print(f"capacity guard [{_where(exc)}]: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (NumericalError, AccuracyError, AssumptionViolation) as exc:
        print(f"numerical failure [{_where(exc)}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (TruncExpError, ValueError) as exc:
        print(f"error [{_where(exc)}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_OTHER
    for k, v in result.items():
        print(f"{k:>24}  {v}")
    print(f"{'elapsed_s':>24}  {time.perf_counter() - t0:.3f}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
