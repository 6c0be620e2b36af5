"""Experiment orchestration: tradeoff sweeps, slope fits, concentration suite.

The tradeoff CSV contract is versioned (first line `# robustness-law-lab v1`,
then the fixed column header) so downstream consumers can fail fast on drift.
All cells of a sweep are pure functions of (config, seed); rows are emitted in
sorted (p, seed) order and floats are written with full repr precision, so
identical configs produce byte-identical files regardless of scheduling.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from . import interp, lipcert, netzoo, theory
from .config import (ConfigError, as_list, distribution_from_config,
                     label_model_from_config, require)
from .isodist import (DistributionSpec, Dataset, linear_functional_tail_checks,
                      min_pairwise_distance, mix_seed, noise_moment_checks,
                      sample_dataset, single)

CSV_VERSION_LINE = "# robustness-law-lab v1"
CSV_COLUMNS = ("p", "d_tilde", "min_sep", "train_mse", "lip_empirical",
               "lip_certified", "informal_bound", "theorem7_bound", "seed")


@dataclass
class TradeoffRow:
    p: int
    d_tilde: int
    min_sep: float
    train_mse: float
    lip_empirical: float
    lip_certified: float
    informal_bound: float
    theorem7_bound: float
    seed: int


@dataclass
class TradeoffResult:
    rows: list[TradeoffRow]
    skipped: list[dict]
    config: dict


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    r2: float


def interpolator_class_constants(f: interp.SmoothInterpolator) -> tuple[float, float]:
    """(W, J) for the function class an interpolator lives in: centers have
    entries in [-1, 1] (projected sphere points) and labels in [-1, 1], so the
    parameter box has Euclidean diameter 2 sqrt(param_count); moving one
    center changes the function by at most lip_g / r per unit, moving one
    label by at most 1, so the sup-norm parametrization constant is
    sqrt(m (1 + (lip_g / r)^2))."""
    slope = f.bump.lip_g / f.radius
    J = math.sqrt(f.m * (1.0 + slope * slope))
    W = 2.0 * math.sqrt(f.param_count)
    return W, J


def interpolator_probe_sampler(spec: DistributionSpec, ds: Dataset, radius: float):
    """Domain sampler mixing fresh covariates with points perturbed off the
    data by less than the bump radius; the projection is 1-Lipschitz, so the
    perturbed points are guaranteed to land inside a bump's support where the
    gradient probes see the real slope."""
    def sampler(rng: np.random.Generator, m: int) -> np.ndarray:
        n_fresh = m // 2
        n_near = m - n_fresh
        fresh = spec.components[0].sample(rng, n_fresh) if n_fresh else np.empty((0, ds.d))
        rows = rng.integers(0, ds.n, size=n_near)
        dirs = rng.standard_normal((n_near, ds.d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = radius * rng.random(n_near)
        near = ds.X[rows] + dirs * radii[:, None]
        return np.concatenate([fresh, near], axis=0)
    return sampler


def _sweep_entries(cfg: dict) -> tuple[str, list[int]]:
    for key, kind in (("sweep.d_tilde", "d_tilde"), ("sweep.p", "p_budget"),
                      ("sweep.width", "width")):
        if key in cfg:
            values = [int(v) for v in as_list(cfg[key])]
            if not values:
                raise ConfigError(f"{key} must be a nonempty list")
            return kind, values
    raise ConfigError("config needs one of sweep.d_tilde, sweep.p, sweep.width")


def tradeoff_experiment(cfg: dict) -> TradeoffResult:
    """One row per (budget, seed): build a projected interpolator (exact fit)
    or train a network below the noise level, then record its certified and
    empirical Lipschitz constants next to the two theory thresholds.

    Budgets that violate the projected-dimension floor are skipped with a
    recorded reason; training runs that miss their target are likewise
    recorded, never silently dropped.
    """
    spec = distribution_from_config(cfg)
    model = label_model_from_config(cfg)
    n = int(require(cfg, "n"))
    seeds = [int(s) for s in as_list(require(cfg, "seeds"))]
    if not seeds:
        raise ConfigError("seeds must be a nonempty list")
    kind, budgets = _sweep_entries(cfg)
    eps = float(cfg.get("eps", 0.5))
    delta = float(cfg.get("delta", 0.05))
    c1 = float(cfg.get("constants.C1", theory.DEFAULT_C1))
    c2 = float(cfg.get("constants.C2", theory.DEFAULT_C2))
    n_pairs = int(cfg.get("probe.n_pairs", 64))
    refine = int(cfg.get("probe.refine_steps", 10))
    sigma_sq = model.sigma_sq
    rows: list[TradeoffRow] = []
    skipped: list[dict] = []
    for budget in budgets:
        if kind == "d_tilde":
            floor = interp.required_d_tilde_floor(n)
            if budget < floor:
                skipped.append({"budget": budget, "reason":
                                f"d_tilde {budget} below floor ceil(4 ln n) = {floor}"})
                continue
        for seed in seeds:
            ds = sample_dataset(spec, model, n, seed)
            try:
                if kind == "width":
                    row = _net_row(cfg, ds, budget, seed, eps, delta, c1, c2,
                                   n_pairs, refine)
                else:
                    row = _interpolator_row(spec, ds, kind, budget, seed, eps, delta,
                                            c1, c2, n_pairs, refine, sigma_sq)
            except (ValueError, netzoo.TrainingDivergence) as exc:
                skipped.append({"budget": budget, "seed": seed, "reason": str(exc)})
                continue
            if row is None:
                skipped.append({"budget": budget, "seed": seed,
                                "reason": "training did not reach target"})
                continue
            rows.append(row)
    rows.sort(key=lambda r: (r.p, r.seed))
    return TradeoffResult(rows=rows, skipped=skipped, config=dict(cfg))


def _theorem7_value(n, d, p, eps, delta, sigma_sq, c, k, W, J, c1, c2) -> float:
    report = theory.lip_lower_bound(theory.BoundInputs(
        n=n, d=d, p=p, eps=eps, delta=delta, sigma_sq=sigma_sq, c=c, k=k,
        W=W, J=J, C1=c1, C2=c2))
    return report.value


def _interpolator_row(spec, ds, kind, budget, seed, eps, delta, c1, c2,
                      n_pairs, refine, sigma_sq) -> TradeoffRow:
    if kind == "d_tilde":
        f = interp.build_projected_interpolator(ds, d_tilde=budget, seed=seed)
    else:
        f = interp.build_projected_interpolator(ds, p_budget=budget, seed=seed)
    resid = interp.interpolation_residuals(f, ds)
    train_mse = float(np.mean(resid * resid))
    lip_cert = interp.analytic_lip(f)
    sampler = interpolator_probe_sampler(spec, ds, f.radius)
    lip_emp = lipcert.empirical_lip_lower(
        lambda X: interp.evaluate_batch(f, X), sampler, n_pairs=n_pairs,
        refine_steps=refine, seed=seed)
    W, J = interpolator_class_constants(f)
    c = spec.components[0].c
    informal = theory.informal_lower_bound(ds.n, ds.d, f.param_count, eps,
                                           math.sqrt(sigma_sq))
    thm7 = _theorem7_value(ds.n, ds.d, f.param_count, eps, delta, sigma_sq, c,
                           spec.k, W, J, c1, c2)
    return TradeoffRow(p=f.param_count, d_tilde=f.d_tilde,
                       min_sep=2.0 * f.radius, train_mse=train_mse,
                       lip_empirical=lip_emp, lip_certified=lip_cert,
                       informal_bound=informal, theorem7_bound=thm7, seed=seed)


def _net_row(cfg, ds, width, seed, eps, delta, c1, c2, n_pairs, refine) -> Optional[TradeoffRow]:
    sigma_sq = ds.label_model.sigma_sq
    target = float(cfg.get("net.target_mse", max(sigma_sq - eps, 1e-3)))
    arch = netzoo.feedforward(ds.d, [width],
                              nonlin=str(cfg.get("net.nonlin", "relu")),
                              W=float(cfg.get("net.W", 1.0)),
                              R=float(cfg.get("net.R", 1.0)))
    result = netzoo.train_to_threshold(
        arch, ds, target, lr=float(cfg.get("net.lr", 0.5)),
        max_steps=int(cfg.get("net.max_steps", 2000)), seed=seed,
        clip_outputs=bool(cfg.get("net.clip_outputs", True)))
    if not result.reached:
        return None
    netfn = netzoo.materialize(arch, result.w)
    lip_cert = lipcert.spectral_product_bound(netfn)
    sampler = lambda rng, m: ds.spec.components[0].sample(rng, m)
    lip_emp = lipcert.empirical_lip_lower(netfn, sampler, n_pairs=n_pairs,
                                          refine_steps=refine, seed=seed)
    informal = theory.informal_lower_bound(ds.n, ds.d, arch.p, eps, math.sqrt(sigma_sq))
    thm7 = _theorem7_value(ds.n, ds.d, arch.p, eps, delta, sigma_sq,
                           ds.spec.components[0].c, ds.spec.k,
                           2.0 * arch.W * math.sqrt(arch.p), netzoo.param_lip_J(arch),
                           c1, c2)
    # the d_tilde column carries the sweep knob: hidden width for net sweeps
    return TradeoffRow(p=arch.p, d_tilde=width,
                       min_sep=min_pairwise_distance(ds.X),
                       train_mse=result.trace[-1], lip_empirical=lip_emp,
                       lip_certified=lip_cert, informal_bound=informal,
                       theorem7_bound=thm7, seed=seed)


# ---------------------------------------------------------------------------
# CSV contract
# ---------------------------------------------------------------------------

def _format_cell(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def write_tradeoff_csv(result: TradeoffResult, path: str) -> str:
    """Emit the versioned CSV and its JSON sidecar (slope fit + skip log);
    returns the sidecar path."""
    lines = [CSV_VERSION_LINE, ",".join(CSV_COLUMNS)]
    for row in result.rows:
        d = asdict(row)
        lines.append(",".join(_format_cell(d[col]) for col in CSV_COLUMNS))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    sidecar = {"config": result.config, "skipped": result.skipped,
               "n_rows": len(result.rows)}
    try:
        fit = slope_fit(result.rows)
        sidecar["slope_fit"] = asdict(fit)
    except ValueError as exc:
        sidecar["slope_fit"] = None
        sidecar["slope_fit_error"] = str(exc)
    sidecar_path = path + ".json"
    with open(sidecar_path, "w") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return sidecar_path


def read_tradeoff_csv(path: str) -> list[TradeoffRow]:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != CSV_VERSION_LINE:
        raise ValueError(f"{path} lacks the version line {CSV_VERSION_LINE!r}")
    if len(lines) < 2 or lines[1] != ",".join(CSV_COLUMNS):
        raise ValueError(f"{path} has an unexpected column header")
    rows = []
    for ln in lines[2:]:
        if not ln:
            continue
        cells = ln.split(",")
        if len(cells) != len(CSV_COLUMNS):
            raise ValueError(f"{path}: row has {len(cells)} cells, expected {len(CSV_COLUMNS)}")
        rows.append(TradeoffRow(
            p=int(cells[0]), d_tilde=int(cells[1]), min_sep=float(cells[2]),
            train_mse=float(cells[3]), lip_empirical=float(cells[4]),
            lip_certified=float(cells[5]), informal_bound=float(cells[6]),
            theorem7_bound=float(cells[7]), seed=int(cells[8])))
    return rows


def slope_fit(rows) -> SlopeFit:
    """OLS of ln(lip_certified) on ln(p) over the rows (or a CSV path)."""
    if isinstance(rows, (str, os.PathLike)):
        rows = read_tradeoff_csv(rows)
    if len({r.p for r in rows}) < 3:
        raise ValueError("slope fit needs at least 3 distinct parameter counts")
    x = np.log([r.p for r in rows])
    y = np.log([r.lip_certified for r in rows])
    if float(np.var(x)) <= 0.0:
        raise ValueError("degenerate sweep: no variance in ln(p)")
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return SlopeFit(slope=float(slope), intercept=float(intercept), r2=r2)


# ---------------------------------------------------------------------------
# concentration suite
# ---------------------------------------------------------------------------

ALL_SUITE_CHECKS = ("iso", "subgaussian", "noise", "paramlip")


@dataclass
class SuiteReport:
    checks: dict
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(entry["passed"] for entry in self.checks.values())

    def to_json(self) -> str:
        return json.dumps({"checks": self.checks, "warnings": self.warnings,
                           "passed": self.passed}, sort_keys=True)


def concentration_suite(cfg: dict) -> SuiteReport:
    """Run the configured subset of deviation checks; a suite passes only if
    every selected check does.  An empty selection passes vacuously with a
    warning."""
    seed = int(cfg.get("seed", 0))
    selection = cfg.get("suite.checks", list(ALL_SUITE_CHECKS))
    if isinstance(selection, str):
        selection = [] if selection == "none" else [selection]
    warnings_list: list[str] = []
    checks: dict = {}
    if not selection:
        warnings_list.append("empty suite selection: vacuous pass")
    for name in selection:
        if name == "iso":
            checks[name] = _suite_iso(cfg, seed)
        elif name == "subgaussian":
            checks[name] = _suite_subgaussian(cfg, seed)
        elif name == "noise":
            checks[name] = _suite_noise(cfg, seed)
        elif name == "paramlip":
            checks[name] = _suite_paramlip(cfg, seed)
        else:
            raise ConfigError(f"unknown suite check {name!r}")
    return SuiteReport(checks=checks, warnings=warnings_list)


def _suite_iso(cfg: dict, seed: int) -> dict:
    d = int(cfg.get("suite.iso.d", 100))
    c = float(cfg.get("suite.iso.c", 1.0))
    N = int(cfg.get("suite.iso.N", 50_000))
    count = int(cfg.get("suite.iso.functionals", 5))
    t_grid = [0.05 * i for i in range(1, 11)]
    failures = []
    for kind in ("sphere", "gaussian", "cube"):
        rng = mix_seed(seed, hash(kind) % (2 ** 16))
        U = rng.standard_normal((count, d))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        reports = linear_functional_tail_checks(single(kind, d, c=c), U, 1.0,
                                                t_grid, N, seed)
        for j, rep in enumerate(reports):
            if not rep.passed:
                failures.append({"kind": kind, "functional": j})
    return {"passed": not failures, "failures": failures, "d": d, "c": c, "N": N}


def _suite_subgaussian(cfg: dict, seed: int) -> dict:
    N = int(cfg.get("suite.subgaussian.N", 100_000))
    n = int(cfg.get("suite.subgaussian.n", 50))
    t_grid = [0.5 * i for i in range(1, 7)]
    out = {}
    for gen in ("rademacher", "gaussian"):
        rep = theory.subgaussian_avg_check(2.0, n, N, t_grid, seed, generator=gen)
        out[gen] = rep.passed
    return {"passed": all(out.values()), "generators": out, "N": N, "n": n}


def _suite_noise(cfg: dict, seed: int) -> dict:
    spec = single(str(cfg.get("suite.noise.dist", "sphere")),
                  int(cfg.get("suite.noise.d", 16)))
    model = label_model_from_config(
        {**cfg, "label.kind": cfg.get("suite.noise.label", "flip_noise"),
         "label.flip_prob": cfg.get("label.flip_prob", 0.2)})
    n = int(cfg.get("suite.noise.n", 10_000))
    eps = float(cfg.get("eps", 0.5))
    ds = sample_dataset(spec, model, n, seed)
    report = noise_moment_checks(ds, eps)
    return {"passed": report.passed, "mean_z_sq": report.mean_z_sq,
            "sigma_sq": report.sigma_sq, "mean_z_g": report.mean_z_g}


def _suite_paramlip(cfg: dict, seed: int) -> dict:
    instances = int(cfg.get("suite.paramlip.instances", 20))
    failures = 0
    for i in range(instances):
        rng = mix_seed(seed, i)
        d = int(rng.integers(1, 9))
        depth = int(rng.integers(1, 4))
        hidden = [int(rng.integers(1, 7)) for _ in range(depth - 1)]
        arch = netzoo.feedforward(d, hidden, nonlin=str(rng.choice(["relu", "tanh", "abs"])))
        if arch.p > 50:
            continue
        w1 = rng.uniform(-1, 1, arch.p)
        w2 = rng.uniform(-1, 1, arch.p)
        report = netzoo.check_param_lipschitz(arch, w1, w2, probes=20, seed=seed + i)
        if not report.passed:
            failures += 1
    return {"passed": failures == 0, "instances": instances, "failures": failures}
