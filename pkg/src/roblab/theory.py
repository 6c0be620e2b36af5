"""Closed-form bound calculators and Monte Carlo validators.

Every probability-style bound is returned raw, even when it exceeds 1, with a
caveat recorded instead of clamping; that keeps monotonicity checks honest.
The absolute constants C1 and C2 that the theory only proves to exist default
to 10^4 (matching the one explicit constant in the finite-class bound) and
are overridable; every report echoes the values actually used.

Where the source expressions for the mixture concentration step disagree on
the constant (10^4 vs 9^4 in intermediate displays), the calculators follow
the theorem statements: 8^3 k in the mixture term and 10^4 in the dense
finite-class exponent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional, Sequence

import numpy as np

from .isodist import DistributionSpec, mix_seed

DEFAULT_C1 = 1e4
DEFAULT_C2 = 1e4


@dataclass
class BoundInputs:
    """Scalar inputs shared by the bound calculators.

    ``sigma_sq`` is the noise level E[Var[y|x]]; ``eps`` the margin below it;
    ``L`` the Lipschitz level a class is tested at; ``W`` the diameter of the
    parameter set; ``J`` the parametrization Lipschitz constant; ``s`` an
    optional sparsity; ``logF`` an optional log class size (defaults to the
    covering log-size of the (p, W, J) box when needed).
    """

    n: int
    d: int
    p: int = 1
    eps: float = 0.1
    delta: float = 0.05
    sigma_sq: float = 1.0
    c: float = 1.0
    k: int = 1
    L: float = 1.0
    W: float = 1.0
    J: float = 1.0
    s: Optional[int] = None
    C1: float = DEFAULT_C1
    C2: float = DEFAULT_C2
    logF: Optional[float] = None
    depth: Optional[int] = None
    b_bar: Optional[float] = None

    def __post_init__(self):
        positives = {"n": self.n, "d": self.d, "eps": self.eps, "delta": self.delta,
                     "sigma_sq": self.sigma_sq, "c": self.c, "k": self.k, "L": self.L,
                     "W": self.W, "J": self.J, "C1": self.C1, "C2": self.C2}
        for name, value in positives.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.p < 0:
            raise ValueError("p must be nonnegative")
        if not (0 < self.eps < 1 and 0 < self.delta < 1):
            raise ValueError("eps and delta must lie in (0, 1)")
        if self.sigma_sq > 1:
            raise ValueError("sigma_sq must lie in (0, 1]")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma_sq)

    def resolved_logF(self) -> float:
        if self.logF is not None:
            return self.logF
        return covering_log_size(self.p, self.W, self.J, self.eps, s=self.s)

    def echo(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class BoundReport:
    name: str
    value: float
    formula: str
    inputs: dict
    caveats: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "formula": self.formula,
                "inputs": self.inputs, "caveats": self.caveats}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _maybe_flag_probability(value: float, caveats: list[str]) -> None:
    if value > 1.0:
        caveats.append("bound exceeds 1 (vacuous at these inputs; returned raw)")
    if not math.isfinite(value):
        raise ValueError("bound evaluated to a non-finite value")


_EXP_CLIP = 700.0     # exp(700) ~ 1e304, just inside float range


def _safe_exp(x: float, caveats: list[str]) -> float:
    """exp with the exponent clipped to stay representable; a clipped value is
    already vacuous beyond any use, but stays finite so reports serialize."""
    if x > _EXP_CLIP:
        caveats.append(f"exponent {x:.3g} clipped to {_EXP_CLIP:g} to stay in float range")
        return math.exp(_EXP_CLIP)
    return math.exp(x)


# ---------------------------------------------------------------------------
# covering numbers and failure probabilities
# ---------------------------------------------------------------------------

def covering_log_size(p: int, W: float, J: float, eps: float,
                      s: Optional[int] = None) -> float:
    """Log of the eps/(8J)-net count for a diameter-W parameter box:
    p ln(1 + 60 W J / eps), or s ln(p (1 + 60 W J / eps)) for s-sparse
    parameter vectors."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if p == 0:
        return 0.0
    ratio = 1.0 + 60.0 * W * J / eps
    if s is None:
        return p * math.log(ratio)
    if not 0 <= s <= p:
        raise ValueError("sparsity must satisfy 0 <= s <= p")
    return s * math.log(p * ratio)


def finite_class_failure_prob(inp: BoundInputs) -> BoundReport:
    """Probability that some member of a finite class of L-Lipschitz functions
    fits below the noise level:

        4 k exp(-n eps^2 / (8^3 k)) + 2 exp(logF - eps^2 n d / (10^4 c L^2)).
    """
    logF = inp.resolved_logF()
    caveats: list[str] = []
    mixture = 4.0 * inp.k * math.exp(-inp.n * inp.eps ** 2 / (512.0 * inp.k))
    conc = 2.0 * _safe_exp(logF - inp.eps ** 2 * inp.n * inp.d / (1e4 * inp.c * inp.L ** 2),
                           caveats)
    value = mixture + conc
    _maybe_flag_probability(value, caveats)
    return BoundReport(
        name="finite_class_failure_prob", value=value,
        formula="4k exp(-n eps^2/(8^3 k)) + 2 exp(logF - eps^2 n d/(10^4 c L^2))",
        inputs={**inp.echo(), "logF": logF}, caveats=caveats)


def improved_failure_prob(inp: BoundInputs) -> BoundReport:
    """Noise-level-aware variant: for d >= C1 c L^2 sigma^2 / eps^2,

        (4k + 1) exp(-n eps^2 / (8^3 k)) + exp(logF - eps^2 n d / (C2 c L^2 sigma^2)).

    Refuses (with the required dimension) when d is too small for the
    hypothesis to hold.
    """
    d_required = inp.C1 * inp.c * inp.L ** 2 * inp.sigma_sq / inp.eps ** 2
    if inp.d < d_required:
        raise ValueError(
            f"dimension hypothesis violated: need d >= C1 c L^2 sigma^2 / eps^2 = "
            f"{d_required:.6g}, got d = {inp.d}")
    logF = inp.resolved_logF()
    caveats: list[str] = []
    mixture = (4.0 * inp.k + 1.0) * math.exp(-inp.n * inp.eps ** 2 / (512.0 * inp.k))
    conc = _safe_exp(logF - inp.eps ** 2 * inp.n * inp.d
                     / (inp.C2 * inp.c * inp.L ** 2 * inp.sigma_sq), caveats)
    value = mixture + conc
    _maybe_flag_probability(value, caveats)
    return BoundReport(
        name="improved_failure_prob", value=value,
        formula="(4k+1) exp(-n eps^2/(8^3 k)) + exp(logF - eps^2 n d/(C2 c L^2 sigma^2))",
        inputs={**inp.echo(), "logF": logF}, caveats=caveats)


def lip_lower_bound(inp: BoundInputs) -> BoundReport:
    """Threshold that every function fitting below sigma^2 - eps must exceed:

        eps / (sigma sqrt(C2 c)) * sqrt(n d / (logterm + log(4/delta)))

    with logterm = p log(1 + 60 W J / eps), or the sparse variant
    s log(p (1 + 60 W J / eps)).  Hypotheses on the mixture size k and on the
    dimension d are checked and reported as caveats; the value is still
    computed so that sweeps stay comparable.
    """
    caveats: list[str] = []
    if 1e4 * inp.k * math.log(8.0 * inp.k / inp.delta) > inp.n * inp.eps ** 2:
        caveats.append(
            "mixture-size hypothesis violated: 10^4 k log(8k/delta) > n eps^2")
    if inp.d < inp.C1 * inp.c * inp.L ** 2 * inp.sigma_sq / inp.eps ** 2:
        caveats.append(
            "dimension hypothesis violated: d < C1 c L^2 sigma^2 / eps^2")
    logterm = covering_log_size(inp.p, inp.W, inp.J, inp.eps, s=inp.s)
    denom = logterm + math.log(4.0 / inp.delta)
    value = (inp.eps / (inp.sigma * math.sqrt(inp.C2 * inp.c))
             * math.sqrt(inp.n * inp.d / denom))
    variant = ("s log(p (1+60WJ/eps))" if inp.s is not None else "p log(1+60WJ/eps)")
    return BoundReport(
        name="lip_lower_bound", value=value,
        formula=f"eps/(sigma sqrt(C2 c)) sqrt(nd / ({variant} + log(4/delta)))",
        inputs=inp.echo(), caveats=caveats)


def informal_lower_bound(n: int, d: int, p: int, eps: float, sigma: float) -> float:
    """(eps / sigma) sqrt(n d / p) with unit hidden constant; for slope and
    scale checks only."""
    if min(n, d, p) <= 0 or eps <= 0 or sigma <= 0:
        raise ValueError("all informal-bound inputs must be positive")
    return (eps / sigma) * math.sqrt(n * d / p)


def depth_lower_bounds(n: int, d: int, p: int, depth: Optional[int] = None,
                       b_bar: Optional[float] = None) -> dict:
    """Network forms of the threshold with unit hidden constants:
    sqrt(n d / (D p)) given a depth, and sqrt(n d / (p log Bbar)) given a
    spectral bound Bbar > 1."""
    if min(n, d, p) <= 0:
        raise ValueError("n, d, p must be positive")
    out = {}
    if depth is not None:
        if depth < 1:
            raise ValueError("depth must be >= 1")
        out["with_depth"] = math.sqrt(n * d / (depth * p))
    if b_bar is not None:
        if b_bar <= 1.0:
            raise ValueError("b_bar must exceed 1 for the log to help")
        out["without_depth"] = math.sqrt(n * d / (p * math.log(b_bar)))
    if not out:
        raise ValueError("provide a depth, a spectral bound, or both")
    return out


# ---------------------------------------------------------------------------
# subgaussian averaging check
# ---------------------------------------------------------------------------

def _rademacher_generator(rng: np.random.Generator, size) -> np.ndarray:
    return rng.integers(0, 2, size=size) * 2.0 - 1.0


def _gaussian_generator(rng: np.random.Generator, size) -> np.ndarray:
    return rng.standard_normal(size)


# both built-ins satisfy P[|X| >= t] <= 2 exp(-t^2 / 2), i.e. C = 2
SUBGAUSSIAN_GENERATORS: dict[str, Callable] = {
    "rademacher": _rademacher_generator,
    "gaussian": _gaussian_generator,
}


@dataclass
class SubgaussianRow:
    t: float
    empirical: float
    bound: float
    passed: bool


@dataclass
class SubgaussianReport:
    rows: list[SubgaussianRow]
    mgf_estimate: float
    mgf_limit: float
    mgf_tolerance: float
    mgf_passed: bool
    generator: str
    C: float
    n: int
    trials: int

    @property
    def passed(self) -> bool:
        return self.mgf_passed and all(r.passed for r in self.rows)

    def to_json(self) -> str:
        return json.dumps({
            "rows": [asdict(r) for r in self.rows],
            "mgf": {"estimate": self.mgf_estimate, "limit": self.mgf_limit,
                    "tolerance": self.mgf_tolerance, "pass": self.mgf_passed},
            "generator": self.generator, "C": self.C, "n": self.n, "trials": self.trials,
        }, sort_keys=True)


def subgaussian_avg_check(C: float, n: int, N_trials: int, t_grid: Sequence[float],
                          seed: int, generator="rademacher",
                          block: int = 100_000) -> SubgaussianReport:
    """Monte Carlo check that averaging preserves subgaussianity with constant
    18C: for X_1..X_n independent mean-zero C-subgaussian and
    X_av = n^{-1/2} sum X_i,

        P[|X_av| >= t] <= 2 exp(-t^2 / (18 C))  at every grid t,

    plus the moment-generating check E[exp(X_av^2 / (3 * 18 C))] <= 2 within
    Monte Carlo error (three standard errors).  Built-in generators:
    "rademacher" and "gaussian", both C = 2.  Trials are sharded in blocks
    with seeds derived from (seed, block index).
    """
    if len(t_grid) == 0:
        raise ValueError("t_grid must be nonempty")
    gen = SUBGAUSSIAN_GENERATORS[generator] if isinstance(generator, str) else generator
    gen_name = generator if isinstance(generator, str) else getattr(generator, "__name__", "custom")
    scale = 1.0 / math.sqrt(n)
    mgf_denom = 3.0 * 18.0 * C
    exceed = np.zeros(len(t_grid), dtype=np.int64)
    mgf_sum = 0.0
    mgf_sq_sum = 0.0
    done = 0
    shard = 0
    t_arr = np.asarray(t_grid, dtype=float)
    while done < N_trials:
        m = min(block, N_trials - done)
        rng = mix_seed(seed, shard)
        draws = np.asarray(gen(rng, (m, n)), dtype=float)
        x_av = draws.sum(axis=1) * scale
        abs_av = np.abs(x_av)
        exceed += (abs_av[:, None] >= t_arr[None, :]).sum(axis=0)
        terms = np.exp(x_av * x_av / mgf_denom)
        mgf_sum += float(terms.sum())
        mgf_sq_sum += float((terms * terms).sum())
        done += m
        shard += 1
    rows = []
    for j, t in enumerate(t_arr):
        emp = exceed[j] / N_trials
        bound = 2.0 * math.exp(-t * t / (18.0 * C))
        rows.append(SubgaussianRow(t=float(t), empirical=float(emp), bound=bound,
                                   passed=emp <= bound))
    mgf_est = mgf_sum / N_trials
    mgf_var = max(mgf_sq_sum / N_trials - mgf_est ** 2, 0.0)
    mgf_tol = 3.0 * math.sqrt(mgf_var / N_trials)
    return SubgaussianReport(
        rows=rows, mgf_estimate=mgf_est, mgf_limit=2.0, mgf_tolerance=mgf_tol,
        mgf_passed=mgf_est <= 2.0 + mgf_tol, generator=gen_name, C=float(C),
        n=int(n), trials=int(N_trials))


# ---------------------------------------------------------------------------
# Rademacher complexity
# ---------------------------------------------------------------------------

def rademacher_estimate(F: Sequence[Callable[[np.ndarray], np.ndarray]],
                        spec: DistributionSpec, n: int, N_outer: int, seed: int,
                        block: int = 2000) -> float:
    """Monte Carlo estimate of the data-dependent complexity

        (1/n) E sup_{f in F} | sum_i sigma_i f(x_i) |

    over fresh draws of covariates x_i from the mixture and symmetric signs
    sigma_i; the inner supremum is exact by enumeration over the finite F."""
    if len(F) == 0:
        raise ValueError("need at least one function")
    total = 0.0
    done = 0
    shard = 0
    while done < N_outer:
        m = min(block, N_outer - done)
        rng = mix_seed(seed, shard)
        k = spec.k
        ids = (rng.choice(k, size=m * n, p=spec.weights) if k > 1
               else np.zeros(m * n, dtype=int))
        X = np.empty((m * n, spec.dim))
        for ell in range(k):
            rows = np.flatnonzero(ids == ell)
            if len(rows):
                X[rows] = spec.components[ell].sample(rng, len(rows))
        signs = rng.integers(0, 2, size=(m, n)) * 2.0 - 1.0
        sup = None
        for f in F:
            vals = np.asarray(f(X), dtype=float).reshape(m, n)
            sums = np.abs((signs * vals).sum(axis=1))
            sup = sums if sup is None else np.maximum(sup, sums)
        total += float(sup.sum())
        done += m
        shard += 1
    return total / (n * N_outer)


def rademacher_envelope(n: int, d: int, c: float, k: int, L: float, logF: float,
                        const: float = 3.0) -> float:
    """Mixture envelope const * max(sqrt(k/n), L sqrt(c logF / (n d))); the
    leading constant is calibrated once against the singleton closed form and
    overridable."""
    return const * max(math.sqrt(k / n), L * math.sqrt(c * logF / (n * d)))


def generalization_gap_bound(inp: BoundInputs, logF: Optional[float] = None,
                             const: float = 1.0) -> BoundReport:
    """Uniform-convergence gap for bounded losses that are 1-Lipschitz in the
    prediction:

        const * max( sqrt(k/n), L sqrt(c logF / (n d)), sqrt(log(1/delta)/n) ).
    """
    lf = logF if logF is not None else inp.resolved_logF()
    value = const * max(
        math.sqrt(inp.k / inp.n),
        inp.L * math.sqrt(inp.c * lf / (inp.n * inp.d)),
        math.sqrt(math.log(1.0 / inp.delta) / inp.n),
    )
    return BoundReport(
        name="generalization_gap_bound", value=value,
        formula="const * max(sqrt(k/n), L sqrt(c logF/(nd)), sqrt(log(1/delta)/n))",
        inputs={**inp.echo(), "logF": lf, "const": const}, caveats=[])


# ---------------------------------------------------------------------------
# explicit net construction
# ---------------------------------------------------------------------------

@dataclass
class NetConstructionReport:
    p: int
    covering_radius: float
    points_per_axis: int
    net_size: int
    size_bound: float
    is_net: bool
    oracle_points: int

    @property
    def passed(self) -> bool:
        return self.is_net and self.net_size <= self.size_bound


def net_construct_and_verify(p: int, W: float, J: float, eps: float,
                             oracle_grid_step: float) -> NetConstructionReport:
    """Build an axis-aligned grid eps/(8J)-net of the Euclidean-diameter-W box
    in R^p and verify it exhaustively.

    The box is [-W/(2 sqrt p), W/(2 sqrt p)]^p.  A grid with per-axis spacing
    h covers with radius h sqrt(p)/2, so h = eps/(4 J sqrt p) suffices; when
    the radius already reaches W/2 the center alone is a net.  The oracle
    sweeps the box at ``oracle_grid_step`` per axis and checks every point has
    a net point within the covering radius.  The constructed size must stay
    within the theoretical count (1 + 60 W J / eps)^p.
    """
    if p < 0:
        raise ValueError("p must be nonnegative")
    if p > 3:
        raise ValueError("brute-force oracle is only feasible for p <= 3")
    if min(W, J, eps, oracle_grid_step) <= 0:
        raise ValueError("W, J, eps, oracle_grid_step must be positive")
    radius = eps / (8.0 * J)
    size_bound = (1.0 + 60.0 * W * J / eps) ** p
    if p == 0:
        return NetConstructionReport(p=0, covering_radius=radius, points_per_axis=1,
                                     net_size=1, size_bound=size_bound, is_net=True,
                                     oracle_points=1)
    side = W / math.sqrt(p)
    if radius >= W / 2.0:
        axes = [np.array([0.0])]
        points_per_axis = 1
    else:
        h = eps / (4.0 * J * math.sqrt(p))
        points_per_axis = math.ceil(side / h) + 1
        axes = [np.linspace(-side / 2.0, side / 2.0, points_per_axis)]
    grids = np.meshgrid(*(axes * p), indexing="ij")
    net = np.stack([g.ravel() for g in grids], axis=1)
    n_axis = max(int(round(side / oracle_grid_step)) + 1, 2)
    oracle_axis = np.linspace(-side / 2.0, side / 2.0, n_axis)
    ogrids = np.meshgrid(*([oracle_axis] * p), indexing="ij")
    oracle_pts = np.stack([g.ravel() for g in ogrids], axis=1)
    is_net = True
    slack = 1e-9 * max(radius, 1.0)
    for start in range(0, len(oracle_pts), 4096):
        chunk = oracle_pts[start:start + 4096]
        d2 = (np.sum(chunk * chunk, axis=1)[:, None]
              + np.sum(net * net, axis=1)[None, :]
              - 2.0 * chunk @ net.T)
        nearest = np.sqrt(np.maximum(d2.min(axis=1), 0.0))
        if np.any(nearest > radius + slack):
            is_net = False
            break
    return NetConstructionReport(
        p=p, covering_radius=radius, points_per_axis=points_per_axis,
        net_size=len(net), size_bound=size_bound, is_net=is_net,
        oracle_points=len(oracle_pts))
