"""Command-line surface.

Subcommands: sample, interpolate, certify, train, bounds, tradeoff, isocheck,
rad, appendix.  Common flags: --config <path>, --seed <int>, --out <path>,
--json.  Configs are flat `key = value` text with dotted keys (see
roblab.config).  Exit codes: 0 success, 1 check failure, 2 configuration
error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import interp, lipcert, netzoo, theory
from .config import (ConfigError, as_list, distribution_from_config,
                     label_model_from_config, load_config, require)
from .isodist import (ConfigurationError, linear_functional_tail_checks,
                      mix_seed, sample_dataset, save_dataset_csv, single)
from .appendixlab import slab_measure_estimate, unique_cell_fraction
from .runner import concentration_suite, slope_fit, tradeoff_experiment, write_tradeoff_csv

OK, CHECK_FAILED, CONFIG_ERROR = 0, 1, 2


def _load(args) -> dict:
    cfg = load_config(args.config) if args.config else {}
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _emit(payload: dict, args) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, sort_keys=True))
    else:
        for key, value in sorted(payload.items()):
            print(f"{key}: {value}")


def cmd_sample(args) -> int:
    cfg = _load(args)
    spec = distribution_from_config(cfg)
    model = label_model_from_config(cfg)
    ds = sample_dataset(spec, model, int(require(cfg, "n")), int(cfg.get("seed", 0)))
    if not args.out:
        raise ConfigError("sample needs --out for the dataset CSV")
    sidecar = save_dataset_csv(ds, args.out)
    _emit({"csv": args.out, "sidecar": sidecar, "n": ds.n, "d": ds.d,
           "sigma_sq": model.sigma_sq}, args)
    return OK


def _dataset_from_cfg(cfg: dict):
    spec = distribution_from_config(cfg)
    model = label_model_from_config(cfg)
    return sample_dataset(spec, model, int(require(cfg, "n")), int(cfg.get("seed", 0))), spec


def cmd_interpolate(args) -> int:
    cfg = _load(args)
    ds, _ = _dataset_from_cfg(cfg)
    if "interp.d_tilde" in cfg:
        f = interp.build_projected_interpolator(ds, d_tilde=int(cfg["interp.d_tilde"]),
                                                seed=int(cfg.get("seed", 0)))
    elif "interp.p_budget" in cfg:
        f = interp.build_projected_interpolator(ds, p_budget=int(cfg["interp.p_budget"]),
                                                seed=int(cfg.get("seed", 0)))
    else:
        policy = cfg.get("interp.radius", "half_min_sep")
        f = interp.build_bump_interpolator(ds, policy)
    resid = interp.interpolation_residuals(f, ds)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(f.to_json() + "\n")
    _emit({"out": args.out, "param_count": f.param_count, "d_tilde": f.d_tilde,
           "radius": f.radius, "max_residual": float(np.max(np.abs(resid))),
           "analytic_lip": interp.analytic_lip(f)}, args)
    return OK


def cmd_certify(args) -> int:
    cfg = _load(args)
    path = str(require(cfg, "certify.interpolator"))
    with open(path) as fh:
        f = interp.SmoothInterpolator.from_dict(json.load(fh))
    spec = single(str(cfg.get("dist.kind", "sphere")), f.input_dim)
    sampler = lambda rng, m: spec.components[0].sample(rng, m)
    estimate = lipcert.certify(
        lambda X: interp.evaluate_batch(f, X), sampler,
        n_pairs=int(cfg.get("probe.n_pairs", 64)),
        refine_steps=int(cfg.get("probe.refine_steps", 10)),
        seed=int(cfg.get("seed", 0)),
        analytic_upper=interp.analytic_lip(f))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(estimate.to_json() + "\n")
    _emit(json.loads(estimate.to_json()), args)
    return OK if estimate.sandwich_ok else CHECK_FAILED


def cmd_train(args) -> int:
    cfg = _load(args)
    ds, _ = _dataset_from_cfg(cfg)
    arch = netzoo.feedforward(ds.d, [int(w) for w in as_list(cfg.get("net.width", 64))],
                              nonlin=str(cfg.get("net.nonlin", "relu")),
                              W=float(cfg.get("net.W", 1.0)),
                              R=float(cfg.get("net.R", 1.0)))
    target = float(cfg.get("net.target_mse", max(ds.label_model.sigma_sq - 0.1, 0.05)))
    result = netzoo.train_to_threshold(
        arch, ds, target, lr=float(cfg.get("net.lr", 0.5)),
        max_steps=int(cfg.get("net.max_steps", 2000)),
        seed=int(cfg.get("seed", 0)),
        clip_outputs=bool(cfg.get("net.clip_outputs", True)),
        project_box=bool(cfg.get("net.project_box", False)))
    if args.out:
        netzoo.save_net_json(arch, result.w, args.out)
        netzoo.save_loss_trace(result.trace, args.out + ".trace.csv")
    _emit({"reached": result.reached, "steps": result.steps,
           "final_mse": result.trace[-1], "target_mse": target, "p": arch.p,
           "out": args.out}, args)
    return OK if result.reached else CHECK_FAILED


def cmd_bounds(args) -> int:
    cfg = _load(args)
    inp = theory.BoundInputs(
        n=int(require(cfg, "n")), d=int(require(cfg, "d")),
        p=int(cfg.get("p", 1)), eps=float(cfg.get("eps", 0.1)),
        delta=float(cfg.get("delta", 0.05)), sigma_sq=float(cfg.get("sigma_sq", 1.0)),
        c=float(cfg.get("c", 1.0)), k=int(cfg.get("k", 1)), L=float(cfg.get("L", 1.0)),
        W=float(cfg.get("W", 1.0)), J=float(cfg.get("J", 1.0)),
        s=int(cfg["s"]) if "s" in cfg else None,
        C1=float(cfg.get("C1", theory.DEFAULT_C1)),
        C2=float(cfg.get("C2", theory.DEFAULT_C2)),
        logF=float(cfg["logF"]) if "logF" in cfg else None,
        depth=int(cfg["depth"]) if "depth" in cfg else None,
        b_bar=float(cfg["b_bar"]) if "b_bar" in cfg else None)
    reports = [
        theory.BoundReport(
            name="covering_log_size",
            value=theory.covering_log_size(inp.p, inp.W, inp.J, inp.eps, s=inp.s),
            formula="p log(1+60WJ/eps) | s log(p(1+60WJ/eps))",
            inputs=inp.echo()),
        theory.finite_class_failure_prob(inp),
        theory.lip_lower_bound(inp),
        theory.generalization_gap_bound(inp),
        theory.BoundReport(
            name="informal_lower_bound",
            value=theory.informal_lower_bound(inp.n, inp.d, max(inp.p, 1), inp.eps, inp.sigma),
            formula="(eps/sigma) sqrt(nd/p)", inputs=inp.echo()),
    ]
    try:
        reports.append(theory.improved_failure_prob(inp))
    except ValueError as exc:
        print(f"improved_failure_prob skipped: {exc}", file=sys.stderr)
    if inp.depth is not None or inp.b_bar is not None:
        for name, value in theory.depth_lower_bounds(
                inp.n, inp.d, max(inp.p, 1), depth=inp.depth, b_bar=inp.b_bar).items():
            reports.append(theory.BoundReport(
                name=f"depth_lower_bound_{name}", value=value,
                formula="sqrt(nd/(Dp)) | sqrt(nd/(p log Bbar))", inputs=inp.echo()))
    payload = [r.to_dict() for r in reports]
    text = json.dumps(payload, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return OK


def cmd_tradeoff(args) -> int:
    cfg = _load(args)
    result = tradeoff_experiment(cfg)
    out = args.out or cfg.get("out.csv")
    if not out:
        raise ConfigError("tradeoff needs --out (or out.csv) for the CSV")
    sidecar = write_tradeoff_csv(result, out)
    payload = {"csv": out, "sidecar": sidecar, "rows": len(result.rows),
               "skipped": len(result.skipped)}
    try:
        fit = slope_fit(result.rows)
        payload.update(slope=fit.slope, r2=fit.r2)
    except ValueError:
        pass
    _emit(payload, args)
    return OK


def cmd_isocheck(args) -> int:
    cfg = _load(args)
    seed = int(cfg.get("seed", 0))
    dims = [int(v) for v in as_list(cfg.get("iso.dims", [50, 100, 200]))]
    kinds = [str(v) for v in as_list(cfg.get("iso.kinds", ["sphere", "gaussian", "cube"]))]
    count = int(cfg.get("iso.functionals", 20))
    N = int(cfg.get("iso.N", 100_000))
    c = float(cfg.get("dist.c", 1.0))
    t_grid = [round(0.05 * i, 10) for i in range(1, 11)]
    results = []
    for kind in kinds:
        for d in dims:
            rng = mix_seed(seed, d * 131 + len(kind))
            U = rng.standard_normal((count, d))
            U /= np.linalg.norm(U, axis=1, keepdims=True)
            reports = linear_functional_tail_checks(single(kind, d, c=c), U, 1.0,
                                                    t_grid, N, seed)
            results.append({"kind": kind, "d": d,
                            "passed": all(r.passed for r in reports)})
    passed = all(r["passed"] for r in results)
    payload = {"checks": results, "passed": passed}
    text = json.dumps(payload, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return OK if passed else CHECK_FAILED


def cmd_rad(args) -> int:
    cfg = _load(args)
    seed = int(cfg.get("seed", 0))
    d = int(cfg.get("dist.d", 50))
    spec = single(str(cfg.get("dist.kind", "sphere")), d)
    n = int(cfg.get("rad.n", 100))
    count = int(cfg.get("rad.functions", 16))
    L = float(cfg.get("L", 2.0))
    N_outer = int(cfg.get("rad.N_outer", 2000))
    rng = mix_seed(seed, 997)
    U = rng.standard_normal((count, d))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    F = [(lambda u: (lambda X: np.clip(L * (X @ u), -1.0, 1.0)))(u) for u in U]
    estimate = theory.rademacher_estimate(F, spec, n, N_outer, seed)
    envelope = theory.rademacher_envelope(n, d, spec.components[0].c, spec.k, L,
                                          math.log(count) if count > 1 else 1.0)
    payload = {"estimate": estimate, "envelope": envelope,
               "passed": estimate <= envelope, "n": n, "functions": count}
    _emit(payload, args)
    return OK if estimate <= envelope else CHECK_FAILED


def cmd_appendix(args) -> int:
    cfg = _load(args)
    seed = int(cfg.get("seed", 0))
    slab_dims = [int(v) for v in as_list(cfg.get("appendix.slab_dims", [5, 10, 20]))]
    N = int(cfg.get("appendix.N", 1_000_000))
    slabs = [slab_measure_estimate(d, N, seed) for d in slab_dims]
    d = int(cfg.get("appendix.d", 14))
    n = int(cfg.get("appendix.n", 160))
    trials = int(cfg.get("appendix.trials", 200))
    cells = unique_cell_fraction(d, n, trials, seed)
    min_rate = float(cfg.get("appendix.min_success_rate", 0.95))
    passed = all(s.passed for s in slabs) and cells.success_rate >= min_rate
    payload = {
        "slabs": [json.loads(s.to_json()) for s in slabs],
        "unique_cells": {"d": d, "n": n, "trials": trials,
                         "success_rate": cells.success_rate,
                         "threshold": cells.threshold},
        "passed": passed,
    }
    text = json.dumps(payload, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return OK if passed else CHECK_FAILED


def cmd_suite(args) -> int:
    cfg = _load(args)
    report = concentration_suite(cfg)
    text = report.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return OK if report.passed else CHECK_FAILED


COMMANDS = {
    "sample": cmd_sample,
    "interpolate": cmd_interpolate,
    "certify": cmd_certify,
    "train": cmd_train,
    "bounds": cmd_bounds,
    "tradeoff": cmd_tradeoff,
    "isocheck": cmd_isocheck,
    "rad": cmd_rad,
    "appendix": cmd_appendix,
    "suite": cmd_suite,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roblab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--json", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ConfigurationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
